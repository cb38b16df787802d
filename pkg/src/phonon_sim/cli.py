"""Command-line front end: ``phonon-sim run | list | verify | template``."""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import yaml

from .experiments import CATALOGUE, ExperimentConfig, ExperimentError, ExperimentName, run
from .verify import format_table, run_checks


def load_config(path: Path | str) -> ExperimentConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a mapping at the top level")
    return ExperimentConfig.from_dict(data)


def dump_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False)


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError("seed must be >= 0")
    return value


def _writable_dir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise OSError(f"output directory {path} is not writable")
    return path


def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.cutoff_override is not None:
        config = config.with_cutoffs(*args.cutoff_override)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    out = _writable_dir(Path(args.out))
    result = run(config)
    for path in result.write(out, args.format):
        print(path)
    return 0


def cmd_list(args: argparse.Namespace) -> int:
    width = max(len(n.value) for n in ExperimentName)
    for name, ref in CATALOGUE.items():
        print(f"{name.value:<{width}}  {ref}")
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    results = run_checks(args.filter)
    print(format_table(results))
    return 0 if all(r.passed for r in results) else 1


def cmd_template(args: argparse.Namespace) -> int:
    text = dump_config(ExperimentConfig.default(args.name))
    if args.out is None:
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phonon-sim",
        description="Simulate bright and dark phonon states of a two-mode trapped-ion system.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment from a YAML config")
    p.add_argument("--config", required=True, help="experiment config (YAML)")
    p.add_argument("--out", required=True, help="directory for result files")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--cutoff-override", nargs=2, type=_positive_int, metavar=("N1", "N2"),
                   help="replace the Fock cutoffs of both modes")
    p.add_argument("--seed", type=_seed, help="replace the config seed")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("list", help="print the experiment catalogue")
    p.set_defaults(func=cmd_list)

    p = sub.add_parser("verify", help="run the invariant and oracle checks")
    p.add_argument("--filter", help="only checks whose name contains this text")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("template", help="print the default config of an experiment")
    p.add_argument("name", choices=[n.value for n in ExperimentName])
    p.add_argument("--out", help="write to this file instead of stdout")
    p.set_defaults(func=cmd_template)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, ExperimentError, OSError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
