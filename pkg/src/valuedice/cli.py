"""Command-line front end.

Subcommands:
  run      execute one algorithm per the config, write <out>.csv + <out>.json
  compare  run valuedice-exact, bc, and gail on shared demonstrations
  export   reduce a run CSV to a two-column update,kl curve

Any config field can be overridden with a dotted flag mirroring its path,
e.g. --training.batch-size 32 or --mix.alpha 0.5. Exit codes: 0 success,
1 runtime failure, 2 config error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError, NumericalError
from .harness import ExperimentConfig, compare_baselines, run_experiment

_SECTIONS = ("mix", "training", "environment")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _apply_overrides(raw: dict, extras: list[str]) -> dict:
    """Fold --dotted.path value pairs into the raw config dict."""
    i = 0
    while i < len(extras):
        flag = extras[i]
        if not flag.startswith("--"):
            raise ConfigError(f"unexpected argument {flag!r}")
        body = flag[2:]
        if "=" in body:
            body, text = body.split("=", 1)
        else:
            i += 1
            if i >= len(extras):
                raise ConfigError(f"flag {flag!r} expects a value")
            text = extras[i]
        i += 1
        parts = body.split(".")
        key = parts[-1].replace("-", "_")
        value = _parse_value(text)
        if len(parts) == 1:
            if key not in ("experiment", "algorithm", "out", "seeds"):
                raise ConfigError(f"unknown config field {key!r}")
            raw[key] = value
        elif len(parts) == 2 and parts[0] in _SECTIONS:
            raw.setdefault(parts[0], {})[key] = value
        else:
            raise ConfigError(f"unknown config field {body!r}")
    return raw


def _load_config(args, extras: list[str]) -> ExperimentConfig:
    if args.config is not None:
        with open(args.config) as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
    else:
        raw = {}
    raw = _apply_overrides(raw, extras)
    if args.out is not None:
        raw["out"] = args.out
    if args.seed is not None:
        try:
            raw["seeds"] = [int(s) for s in args.seed.split(",") if s != ""]
        except ValueError as exc:
            raise ConfigError(f"invalid --seed list {args.seed!r}") from exc
    return ExperimentConfig.from_dict(raw)


def _cmd_export(args) -> int:
    """Filter one seed out of a run CSV and rewrite it as update,kl."""
    with open(args.input) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    for col in ("update", "kl"):
        if col not in header:
            raise ConfigError(f"input CSV lacks a {col!r} column")
    iu, ik = header.index("update"), header.index("kl")
    isd = header.index("seed") if "seed" in header else None
    if isd is not None:
        seeds = sorted({int(r[isd]) for r in rows})
        want = args.seed if args.seed is not None else seeds[0]
        if want not in seeds:
            raise ConfigError(f"seed {want} not present in {args.input}")
        rows = [r for r in rows if int(r[isd]) == want]
    with open(args.out, "w") as fh:
        fh.write("update,kl\n")
        for r in sorted(rows, key=lambda r: int(r[iu])):
            fh.write(f"{r[iu]},{r[ik]}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="valuedice", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "compare"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config path")
        p.add_argument("--out", default=None, help="output path prefix")
        p.add_argument("--seed", default=None, help="comma-separated seed list")
    p = sub.add_parser("export")
    p.add_argument("--in", dest="input", required=True, help="run CSV to reduce")
    p.add_argument("--out", required=True, help="curve CSV destination")
    p.add_argument("--seed", type=int, default=None, help="seed to extract")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args, extras = parser.parse_known_args(argv)
    try:
        if args.command == "export":
            if extras:
                raise ConfigError(f"unexpected argument {extras[0]!r}")
            return _cmd_export(args)
        config = _load_config(args, extras)
        runner = run_experiment if args.command == "run" else compare_baselines
        return runner(config)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
