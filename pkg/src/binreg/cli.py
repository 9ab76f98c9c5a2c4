"""Command-line experiment driver.

Subcommands: ``gen-data``, ``train``, ``evaluate``, ``sweep``, ``grad-demo``.
Every run is deterministic given its config and seed; CSV outputs are
byte-identical across reruns (the sweep chart may carry a timestamp comment,
suppressible with ``--no-timestamp``).

Exit codes: 0 success, 2 config or path error, 3 numeric failure,
4 partial sweep failure.
"""

from __future__ import annotations

import argparse
import os
import shutil
import sys
from dataclasses import replace

from . import experiment
from .experiment import ConfigError
from .net import CheckpointError, NumericsError, load_checkpoint
from .synth import DatasetError, generate_dataset, load_dataset
from .training import TrainingDiverged

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_PARTIAL = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="binreg", description="binned-regression experiment harness"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=False, checkpoint=False):
        p.add_argument("--config", required=True, help="experiment config (INI)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="seed override (u64)")
        if data:
            p.add_argument("--data", default=None, help="dataset directory")
        if checkpoint:
            p.add_argument("--checkpoint", required=True, help="model checkpoint")

    common(sub.add_parser("gen-data", help="generate the synthetic dataset"))
    common(sub.add_parser("train", help="train one model"), data=True)
    common(
        sub.add_parser("evaluate", help="evaluate a checkpoint"),
        data=True,
        checkpoint=True,
    )
    p_sweep = sub.add_parser("sweep", help="run the loss/hinge/seed grid")
    common(p_sweep, data=True)
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.add_argument("--no-timestamp", action="store_true")
    p_demo = sub.add_parser("grad-demo", help="tabulate vanishing-gradient cases")
    common(p_demo)
    p_demo.add_argument("--bins", type=int, default=None)
    return parser


def _prepare_out(path: str) -> str:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {path!r}: {exc}") from exc
    if not os.path.isdir(path):
        raise ConfigError(f"output path {path!r} is not a directory")
    return path


def _echo_config(config_path: str, out_dir: str) -> None:
    shutil.copy(config_path, os.path.join(out_dir, "config.ini"))


def _resolve_data_dir(args, config) -> str:
    data = getattr(args, "data", None) or config.data_dir
    if not data:
        raise ConfigError("no dataset directory: pass --data or set [dataset] dir")
    if not os.path.isdir(data):
        raise ConfigError(f"dataset directory not found: {data!r}")
    return data


def _cmd_gen_data(args) -> int:
    config = experiment.parse_config(args.config)
    out = _prepare_out(args.out)
    seed = args.seed if args.seed is not None else config.dataset_seed
    manifest = generate_dataset(config.dataset, seed, out)
    _echo_config(args.config, out)
    counts = manifest.counts()
    print(f"dataset written to {out} (base seed {seed})")
    for split, n in counts.items():
        print(f"  {split}: {n} images")
    return EXIT_OK


def _cmd_train(args) -> int:
    config = experiment.parse_config(args.config)
    data_dir = _resolve_data_dir(args, config)
    out = _prepare_out(args.out)
    train_cfg = config.train
    if args.seed is not None:
        train_cfg = replace(train_cfg, seed=args.seed)
    dataset = load_dataset(data_dir)
    row, report = experiment.run_cell(
        data_dir, config.spec, train_cfg, config.eval, out, dataset=dataset
    )
    _echo_config(args.config, out)
    with open(os.path.join(out, "results.csv"), "w", encoding="ascii") as fh:
        fh.write(experiment.results_csv([row]))
    print(
        f"trained {train_cfg.loss} (gamma {train_cfg.gamma:.6g}, "
        f"{train_cfg.target_mode}, seed {train_cfg.seed}): "
        f"auc {row['auc']:.6g}, alpha AUSE {row['alpha_ause']:.6g}"
    )
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    config = experiment.parse_config(args.config)
    data_dir = _resolve_data_dir(args, config)
    out = _prepare_out(args.out)
    if not os.path.exists(args.checkpoint):
        raise ConfigError(f"checkpoint not found: {args.checkpoint!r}")
    model = load_checkpoint(args.checkpoint)
    dataset = load_dataset(data_dir)
    report = experiment.evaluate_model(model, dataset, config.eval)
    row = {
        "loss": config.train.loss,
        "gamma": config.train.gamma if config.train.loss == "hinge_w1" else 0.0,
        "target_mode": config.train.target_mode,
        "seed": config.train.seed,
        **report.row,
    }
    experiment.write_eval_outputs(report, out)
    with open(os.path.join(out, "results.csv"), "w", encoding="ascii") as fh:
        fh.write(experiment.results_csv([row]))
    _echo_config(args.config, out)
    print(
        f"evaluated {args.checkpoint}: auc {row['auc']:.6g}, "
        f"alpha AUSE {row['alpha_ause']:.6g}, rho AUSE {row['rho_ause']:.6g}"
    )
    return EXIT_OK


def _cmd_sweep(args) -> int:
    config = experiment.parse_config(args.config)
    data_dir = _resolve_data_dir(args, config)
    out = _prepare_out(args.out)
    rows, failures = experiment.sweep(
        config,
        data_dir,
        out,
        workers=max(1, args.workers),
        timestamp=not args.no_timestamp,
    )
    print(f"sweep finished: {len(rows)} cells ok, {len(failures)} failed")
    if failures:
        for cell, msg in failures:
            print(f"  FAILED {cell}: {msg}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _cmd_grad_demo(args) -> int:
    bins = args.bins
    if bins is None:
        config = experiment.parse_config(args.config)
        bins = config.spec.bins
    if bins < 2:
        raise ConfigError(f"need at least 2 bins, got {bins}")
    out = _prepare_out(args.out)
    rows = experiment.grad_demo_rows(bins)
    path = os.path.join(out, "grad_demo.csv")
    with open(path, "w", encoding="ascii") as fh:
        fh.write(experiment.grad_demo_csv(rows))
    print(f"gradient demo for K={bins} written to {path}")
    return EXIT_OK


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "sweep": _cmd_sweep,
    "grad-demo": _cmd_grad_demo,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, DatasetError, CheckpointError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingDiverged, NumericsError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
