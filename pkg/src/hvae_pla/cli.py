"""Command-line entry point: ``hvae-pla {gen,train,auth,experiment,sweep}``.

Exit status: 0 on success, 2 for configuration or input errors, 3 when
training hits a non-finite value.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import experiment
from .auth import ProtocolError, UntrainedModelError
from .checkpoint import CheckpointError
from .config import ConfigError, parse_config
from .dataset_io import DatasetFormatError
from .nn import NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

_FLAG_KEYS = {"seed": "seed", "scenario": "scenario", "model": "model_kind",
              "alice_node": "alice_node", "alpha": "alpha", "out": "output_dir"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hvae-pla",
                                     description="Threshold-free CIR authentication experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"gen": "generate a dataset", "train": "train a model and save a checkpoint",
             "auth": "authenticate with a saved checkpoint",
             "experiment": "generate, train and authenticate end to end",
             "sweep": "run every combination of the sweep_* config lists"}
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--seed")
        p.add_argument("--scenario", help="static, mobile or file:<path>")
        p.add_argument("--model", help="tf_hvae, tf_ae, tb_ae or tf_vae")
        p.add_argument("--alice-node", dest="alice_node")
        p.add_argument("--alpha")
        p.add_argument("--out", help="output directory")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override any config key (repeatable)")
    return parser


def _overrides(args) -> dict[str, str]:
    pairs = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        pairs[key.strip().replace("-", "_")] = value.strip()
    for flag, key in _FLAG_KEYS.items():
        value = getattr(args, flag)
        if value is not None:
            pairs[key] = value
    return pairs


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config, _overrides(args))
        if args.command == "gen":
            ds = experiment.generate(cfg)
            print(f"wrote {len(ds.records)} records to {cfg.output_dir}/dataset.cir")
        elif args.command == "train":
            _, history = experiment.train_only(cfg)
            print(f"trained {cfg.model_kind}: loss {history[0]:.6g} -> {history[-1]:.6g}"
                  if history else f"{cfg.model_kind}: zero epochs, nothing trained")
        elif args.command == "auth":
            report = experiment.auth_only(cfg)
            print(f"{report.model_kind}: average F1 {report.average_f1:.4f}")
        elif args.command == "experiment":
            report = experiment.run_experiment(cfg)
            print(f"{report.model_kind}: average F1 {report.average_f1:.4f}")
        else:
            rows = experiment.run_sweep(cfg)
            print(f"completed {len(rows)} runs; summary in {cfg.output_dir}/summary.csv")
    except NumericalError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ProtocolError, DatasetFormatError, CheckpointError,
            UntrainedModelError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
