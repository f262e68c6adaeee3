"""Command-line entry point: ``plauth`` / ``python -m plauth``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from .experiment import (ConfigError, ExperimentConfig, MODELS, SCENARIOS, config_from_mapping,
                         read_config_file, read_sweep_file, run_experiment, run_sweep)
from .svm import SolverError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

# argparse dest -> ExperimentConfig field
_FLAG_FIELDS = ("scenario", "model", "seed", "n0", "n1", "n_val", "n_test", "kernel", "alpha",
                "c", "epochs", "lr", "loss", "trainer", "init", "mc_samples", "latent", "out")


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _ArgumentParser(
        prog="plauth",
        description="Run physical-layer authentication classifier experiments and write "
                    "DET curves, error rates and model files.",
    )
    g = p.add_argument_group("experiment")
    g.add_argument("--scenario", choices=SCENARIOS, help="channel scenario (default gaussian)")
    g.add_argument("--model", choices=MODELS, help="classifier (default lt)")
    g.add_argument("--seed", type=int, help="master seed (default 0)")
    g.add_argument("--n0", type=int, help="legitimate training samples")
    g.add_argument("--n1", type=int, help="artificial uniform training samples (two-class models)")
    g.add_argument("--n-val", type=int, dest="n_val", help="validation samples (default 15000)")
    g.add_argument("--n-test", type=int, dest="n_test", help="test samples per class (default 25000)")
    g.add_argument("--kernel", choices=("rbf", "dk"), help="SVM kernel (default rbf)")
    g.add_argument("--alpha", type=float, help="RBF kernel parameter")
    g.add_argument("--c", type=float, help="SVM regularization C (default 1.0)")
    g.add_argument("--epochs", type=int, help="training epochs (default 5)")
    g.add_argument("--lr", type=float, help="learning rate")
    g.add_argument("--loss", choices=("cross-entropy", "square-error"), help="NN loss")
    g.add_argument("--trainer", choices=("sgd", "msgd"),
                   help="NN training: sgd on data plus artificial set, or msgd on data only")
    g.add_argument("--init", choices=("glorot-sigmoid", "glorot", "fan-in"), help="NN weight init")
    g.add_argument("--mc-samples", type=int, dest="mc_samples",
                   help="Monte-Carlo samples per msgd step (default 64)")
    g.add_argument("--latent", type=int, help="autoencoder latent size K (default 1)")
    g.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="scenario parameter, e.g. zeta=15 or bits=4 (repeatable)")
    o = p.add_argument_group("output")
    o.add_argument("--out", help="output directory for the artifact bundle")
    o.add_argument("--emit-svg", action="store_true", help="also render det.svg")
    o.add_argument("--no-datasets", action="store_true", help="skip train.csv / test.csv")
    r = p.add_argument_group("control")
    r.add_argument("--config", help="INI file; its settings override command-line flags")
    r.add_argument("--sweep", metavar="FILE", help="INI file with a [sweep] grid to run")
    r.add_argument("--workers", type=int, default=1, help="parallel sweep workers (default 1)")
    r.add_argument("-v", "--verbose", action="count", default=0, help="more progress output")
    return p


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    """Defaults, then flags, then the config file."""
    values = {k: getattr(args, k) for k in _FLAG_FIELDS if getattr(args, k) is not None}
    scen = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"--set: expected KEY=VALUE, got {item!r}")
        scen[key.strip()] = value.strip()
    cfg = dataclasses.replace(ExperimentConfig(), **values)
    if scen:
        cfg = config_from_mapping(cfg, {}, scen)
    if args.emit_svg:
        cfg = dataclasses.replace(cfg, emit_svg=True)
    if args.no_datasets:
        cfg = dataclasses.replace(cfg, save_datasets=False)
    if args.config:
        cfg = read_config_file(args.config, cfg)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(message)s")
    # progress from this package only; -v adds per-epoch detail
    logging.getLogger("plauth").setLevel(logging.DEBUG if args.verbose else logging.INFO)
    try:
        cfg = config_from_args(args)
        if args.workers < 1:
            raise ConfigError("--workers: must be >= 1")
        if args.sweep:
            if not cfg.out:
                raise ConfigError("--out: required with --sweep")
            grid = read_sweep_file(args.sweep)
            path = run_sweep(cfg, grid, cfg.out, workers=args.workers)
            print(f"wrote {path}", file=sys.stderr)
        else:
            result = run_experiment(cfg)
            s = result.summary
            if not cfg.out:
                # no bundle requested: the summary itself is the machine output
                json.dump(s, sys.stdout, indent=2, sort_keys=True)
                sys.stdout.write("\n")
            print(f"xi={s['xi']:.5f} xi_lt={s['xi_lt']:.5f} "
                  f"tau={s['equivalence']['kendall_tau']:.4f} "
                  f"train={result.timing['train_s']:.1f}s", file=sys.stderr)
    except ConfigError as exc:
        print(f"plauth: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, FloatingPointError, ArithmeticError) as exc:
        print(f"plauth: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
