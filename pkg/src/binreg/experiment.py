"""Experiment driver: config files, evaluation pipeline, sweeps, reports.

Configs are flat ``key = value`` INI files with one section per concern
(dataset, model, train, eval, sweep); the file is echoed verbatim into every
output directory so a run's provenance travels with its results.  Hinge
values may be written relative to the bin count, e.g. ``1/K``.
"""

from __future__ import annotations

import configparser
import os
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .binning import DiracMixture, Histogram, encode_mixture
from .losses import LOSSES, loss_grad
from .metrics import (
    UNCERTAINTY_MEASURES,
    EvalRecord,
    SparsificationResult,
    auc_cumulative_error,
    crps_mixture,
    horizon_error,
    kde,
    sparsification,
)
from .net import NetworkModel, NetworkSpec, forward_probs, save_checkpoint
from .svgchart import line_chart
from .synth import DatasetConfig, LoadedDataset, load_dataset
from .training import TrainConfig, history_to_csv, train

__all__ = [
    "ConfigError",
    "EvalConfig",
    "SweepConfig",
    "ExperimentConfig",
    "EvalReport",
    "parse_config",
    "parse_gamma",
    "evaluate_model",
    "evaluate_predictions",
    "run_cell",
    "sweep",
    "grad_demo_rows",
    "grad_demo_csv",
    "results_csv",
    "aggregate_csv",
    "RESULTS_HEADER",
]

RESULTS_HEADER = "loss,gamma,target_mode,seed,auc,alpha_ause,rho_ause,alpha_crps,rho_crps"

CURVE_HEADER = "fraction,sparsification,oracle,sparsification_error"


class ConfigError(ValueError):
    """The experiment config is malformed or references missing paths."""


@dataclass(frozen=True)
class EvalConfig:
    measure: str = "entropy"
    auc_cutoff: float = 0.25
    auc_split: str = "ambiguous"  # ambiguous | clear | pooled
    ause_split: str = "ambiguous"  # ambiguous | pooled
    sparsification_steps: int = 100
    crps: bool = True
    kde_points: int = 256

    def __post_init__(self):
        if self.measure not in UNCERTAINTY_MEASURES:
            raise ConfigError(f"unknown uncertainty measure {self.measure!r}")
        if self.auc_split not in ("ambiguous", "clear", "pooled"):
            raise ConfigError(f"unknown auc split {self.auc_split!r}")
        if self.ause_split not in ("ambiguous", "pooled"):
            raise ConfigError(f"unknown ause split {self.ause_split!r}")
        if self.auc_cutoff <= 0:
            raise ConfigError("auc cutoff must be positive")


@dataclass(frozen=True)
class SweepConfig:
    losses: tuple[str, ...]
    gammas: tuple[float, ...]
    target_modes: tuple[str, ...]
    seeds: tuple[int, ...]

    def __post_init__(self):
        if not (self.losses and self.gammas and self.target_modes and self.seeds):
            raise ConfigError("sweep lists must be non-empty")
        for loss in self.losses:
            if loss not in LOSSES:
                raise ConfigError(f"unknown sweep loss {loss!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig
    dataset_seed: int
    data_dir: str | None
    spec: NetworkSpec
    train: TrainConfig
    eval: EvalConfig
    sweep: SweepConfig | None
    source_path: str | None = None


def parse_gamma(text: str, bins: int) -> float:
    """A hinge value, either a plain float or a bin-relative form like 1/K."""
    text = text.strip()
    if text.lower().endswith("/k"):
        return float(text[:-2]) / bins
    return float(text)


def _section(parser: configparser.ConfigParser, name: str) -> dict[str, str]:
    return dict(parser[name]) if parser.has_section(name) else {}


def _build(cls, raw: dict[str, str], converters: dict):
    kwargs = {}
    for key, value in raw.items():
        if key not in converters:
            raise ConfigError(f"unknown key {key!r} for {cls.__name__}")
        try:
            kwargs[key] = converters[key](value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {value!r} ({exc})") from exc
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def parse_config(path) -> ExperimentConfig:
    path = os.fspath(path)
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc

    ds_raw = _section(parser, "dataset")
    dataset_seed = int(ds_raw.pop("seed", "42"))
    data_dir = ds_raw.pop("dir", None)
    dataset = _build(
        DatasetConfig,
        ds_raw,
        {
            "width": int,
            "height": int,
            "train_one_line": int,
            "train_two_line": int,
            "test_clear": int,
            "test_ambiguous": int,
            "noise_sigma": float,
            "thickness": float,
            "contrast": float,
            "alpha_range": float,
            "min_visible_frac": float,
            "min_sep_alpha": float,
            "min_sep_rho_frac": float,
            "separation_filter": _bool,
        },
    )

    model_raw = _section(parser, "model")
    spec = _build(
        NetworkSpec,
        {"height": str(dataset.height), "width": str(dataset.width), **model_raw},
        {
            "height": int,
            "width": int,
            "conv_channels": _int_list,
            "kernel": int,
            "stride": int,
            "leaky_slope": float,
            "pool": str,
            "bins": int,
            "head": str,
        },
    )

    train_raw = _section(parser, "train")
    if "gamma" in train_raw:
        train_raw["gamma"] = repr(parse_gamma(train_raw["gamma"], spec.bins))
    train_cfg = _build(
        TrainConfig,
        train_raw,
        {
            "loss": str,
            "gamma": float,
            "fallback": str,
            "target_mode": str,
            "smoothing_sigma": float,
            "epochs": int,
            "batch_size": int,
            "learning_rate": float,
            "beta1": float,
            "beta2": float,
            "eps": float,
            "auc_cutoff": float,
            "seed": int,
        },
    )

    eval_cfg = _build(
        EvalConfig,
        _section(parser, "eval"),
        {
            "measure": str,
            "auc_cutoff": float,
            "auc_split": str,
            "ause_split": str,
            "sparsification_steps": int,
            "crps": _bool,
            "kde_points": int,
        },
    )

    sweep_cfg = None
    if parser.has_section("sweep"):
        raw = _section(parser, "sweep")
        sweep_cfg = SweepConfig(
            losses=_str_list(raw.get("losses", "w1,hinge_w1")),
            gammas=tuple(
                parse_gamma(v, spec.bins) for v in raw.get("gammas", "1/K").split(",")
            ),
            target_modes=_str_list(raw.get("target_modes", "unimodal")),
            seeds=_int_list(raw.get("seeds", "0,1,2")),
        )

    return ExperimentConfig(
        dataset=dataset,
        dataset_seed=dataset_seed,
        data_dir=data_dir,
        spec=spec,
        train=train_cfg,
        eval=eval_cfg,
        sweep=sweep_cfg,
        source_path=path,
    )


# ---------------------------------------------------------------------------
# evaluation pipeline
# ---------------------------------------------------------------------------


@dataclass
class EvalReport:
    row: dict
    clear_auc: float
    ambiguous_auc: float
    curves: dict[str, SparsificationResult]
    kde_xs: dict[str, np.ndarray]
    kde_curves: dict[tuple[str, str], np.ndarray]
    entropy_medians: dict[tuple[str, str], float]


def _decode_rows(probs: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return centers[np.argmax(probs, axis=1)]


def _horizon_errors(alpha_hat, rho_hat, samples, width, height):
    errors = np.empty(len(samples))
    for i, sample in enumerate(samples):
        pred_alpha = float(np.clip(alpha_hat[i], -np.pi / 2, np.pi / 2))
        pred = _safe_line(pred_alpha, float(rho_hat[i]))
        gt = sample.label_line
        errors[i] = 1.0 if pred is None else horizon_error(pred, gt, width, height)
    return errors


def _safe_line(alpha, rho):
    from .synth import LineParams

    try:
        return LineParams(alpha, max(rho, 0.0))
    except ValueError:
        return None


def evaluate_predictions(
    dataset: LoadedDataset,
    preds: dict[str, tuple[np.ndarray, np.ndarray]],
    alpha_grid,
    rho_grid,
    eval_cfg: EvalConfig,
) -> EvalReport:
    """Score per-split head probabilities; predictions may come from anywhere.

    ``preds`` maps split name to (alpha_probs, rho_probs) arrays of shape
    (N, K).  Keeping the predictor injectable lets tests drive the pipeline
    with oracle or uniform predictions.
    """
    cfg = dataset.manifest.config
    measure = UNCERTAINTY_MEASURES[eval_cfg.measure]
    a_centers = alpha_grid.centers()
    r_centers = rho_grid.centers()

    split_errors = {}
    for split in ("test_clear", "test_ambiguous"):
        pa, pr = preds[split]
        samples = dataset.samples[split]
        alpha_hat = _decode_rows(pa, a_centers)
        rho_hat = _decode_rows(pr, r_centers)
        split_errors[split] = _horizon_errors(
            alpha_hat, rho_hat, samples, cfg.width, cfg.height
        )
    clear_auc = auc_cumulative_error(split_errors["test_clear"], eval_cfg.auc_cutoff)
    ambiguous_auc = auc_cumulative_error(
        split_errors["test_ambiguous"], eval_cfg.auc_cutoff
    )
    if eval_cfg.auc_split == "clear":
        auc = clear_auc
    elif eval_cfg.auc_split == "pooled":
        pooled = np.concatenate(list(split_errors.values()))
        auc = auc_cumulative_error(pooled, eval_cfg.auc_cutoff)
    else:
        auc = ambiguous_auc

    # per-head records: |decoded - labeled parameter| vs the chosen measure
    records: dict[str, dict[str, list[EvalRecord]]] = {
        "alpha": {}, "rho": {},
    }
    uncert_values: dict[tuple[str, str], np.ndarray] = {}
    for split in ("test_clear", "test_ambiguous"):
        pa, pr = preds[split]
        samples = dataset.samples[split]
        for head, probs, centers, grid in (
            ("alpha", pa, a_centers, alpha_grid),
            ("rho", pr, r_centers, rho_grid),
        ):
            decoded = _decode_rows(probs, centers)
            uncs = np.empty(len(samples))
            recs = []
            for i, sample in enumerate(samples):
                truth = (
                    sample.label_line.alpha if head == "alpha" else sample.label_line.rho
                )
                hist = Histogram(probs[i], grid)
                uncs[i] = measure(hist)
                recs.append(
                    EvalRecord(error=abs(float(decoded[i]) - truth), uncertainty=uncs[i])
                )
            records[head][split] = recs
            uncert_values[(head, split)] = uncs

    curves = {}
    row = {"auc": auc}
    for head in ("alpha", "rho"):
        recs = list(records[head]["test_ambiguous"])
        if eval_cfg.ause_split == "pooled":
            recs = records[head]["test_clear"] + recs
        result = sparsification(recs, eval_cfg.sparsification_steps)
        curves[head] = result
        row[f"{head}_ause"] = result.ause

    if eval_cfg.crps:
        pa, pr = preds["test_ambiguous"]
        samples = dataset.samples["test_ambiguous"]
        for head, probs, grid in (("alpha", pa, alpha_grid), ("rho", pr, rho_grid)):
            scores = np.empty(len(samples))
            for i, sample in enumerate(samples):
                values = [
                    ln.alpha if head == "alpha" else ln.rho for ln in sample.lines
                ]
                mix = DiracMixture.equal_weight(values)
                scores[i] = crps_mixture(Histogram(probs[i], grid), mix)
            row[f"{head}_crps"] = float(scores.mean())
    else:
        row["alpha_crps"] = float("nan")
        row["rho_crps"] = float("nan")

    # entropy KDE curves per head and split (always entropy, as reported)
    kde_xs = {}
    kde_curves = {}
    medians = {}
    from .metrics import entropy as _entropy

    ent_values = {}
    for split in ("test_clear", "test_ambiguous"):
        pa, pr = preds[split]
        for head, probs, grid in (("alpha", pa, alpha_grid), ("rho", pr, rho_grid)):
            vals = np.array(
                [_entropy(Histogram(p, grid)) for p in probs], dtype=np.float64
            )
            ent_values[(head, split)] = vals
            medians[(head, split)] = float(np.median(vals))
    for head in ("alpha", "rho"):
        pooled = np.concatenate(
            [ent_values[(head, s)] for s in ("test_clear", "test_ambiguous")]
        )
        spread = pooled.std(ddof=1) if pooled.size > 1 else 1.0
        bw = max(1.06 * spread * pooled.size ** (-0.2), 1e-3)
        lo, hi = pooled.min() - 3 * bw, pooled.max() + 3 * bw
        xs = np.linspace(lo, hi, eval_cfg.kde_points)
        kde_xs[head] = xs
        for split in ("test_clear", "test_ambiguous"):
            kde_curves[(head, split)] = kde(ent_values[(head, split)], bw, xs)

    return EvalReport(
        row=row,
        clear_auc=clear_auc,
        ambiguous_auc=ambiguous_auc,
        curves=curves,
        kde_xs=kde_xs,
        kde_curves=kde_curves,
        entropy_medians=medians,
    )


def evaluate_model(
    model: NetworkModel, dataset: LoadedDataset, eval_cfg: EvalConfig
) -> EvalReport:
    preds = {}
    for split in ("test_clear", "test_ambiguous"):
        preds[split] = forward_probs(model, dataset.stacked_images(split))
    return evaluate_predictions(
        dataset, preds, model.alpha_grid, model.rho_grid, eval_cfg
    )


# ---------------------------------------------------------------------------
# sweep machinery and reports
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{float(x):.6g}"


def results_csv(rows) -> str:
    lines = [RESULTS_HEADER]
    for r in rows:
        lines.append(
            f"{r['loss']},{_fmt(r['gamma'])},{r['target_mode']},{r['seed']},"
            f"{_fmt(r['auc'])},{_fmt(r['alpha_ause'])},{_fmt(r['rho_ause'])},"
            f"{_fmt(r['alpha_crps'])},{_fmt(r['rho_crps'])}"
        )
    return "\n".join(lines) + "\n"


_METRIC_KEYS = ("auc", "alpha_ause", "rho_ause", "alpha_crps", "rho_crps")


def aggregate_rows(rows):
    """Mean and standard error (n-1 denominator) per (loss, gamma, target_mode)."""
    groups: dict[tuple, list] = {}
    for r in rows:
        groups.setdefault((r["loss"], r["gamma"], r["target_mode"]), []).append(r)
    out = []
    for (loss, gamma, mode), members in sorted(groups.items()):
        agg = {"loss": loss, "gamma": gamma, "target_mode": mode, "n_seeds": len(members)}
        for key in _METRIC_KEYS:
            vals = np.array([m[key] for m in members], dtype=np.float64)
            agg[f"{key}_mean"] = float(vals.mean())
            agg[f"{key}_se"] = (
                float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) >= 2 else None
            )
        out.append(agg)
    return out


def aggregate_csv(aggregates) -> str:
    header = ["loss", "gamma", "target_mode", "n_seeds"]
    for key in _METRIC_KEYS:
        header += [f"{key}_mean", f"{key}_se"]
    lines = [",".join(header)]
    for a in aggregates:
        cells = [a["loss"], _fmt(a["gamma"]), a["target_mode"], str(a["n_seeds"])]
        for key in _METRIC_KEYS:
            cells.append(_fmt(a[f"{key}_mean"]))
            se = a[f"{key}_se"]
            cells.append("" if se is None else _fmt(se))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def curve_csv(result: SparsificationResult) -> str:
    lines = [CURVE_HEADER]
    for f, s, o, e in zip(
        result.fractions,
        result.sparsification_curve,
        result.oracle_curve,
        result.error_curve,
    ):
        lines.append(f"{_fmt(f)},{_fmt(s)},{_fmt(o)},{_fmt(e)}")
    return "\n".join(lines) + "\n"


def kde_csv(report: EvalReport, head: str) -> str:
    lines = ["value,clear,ambiguous"]
    xs = report.kde_xs[head]
    clear = report.kde_curves[(head, "test_clear")]
    ambig = report.kde_curves[(head, "test_ambiguous")]
    for x, c, a in zip(xs, clear, ambig):
        lines.append(f"{_fmt(x)},{_fmt(c)},{_fmt(a)}")
    return "\n".join(lines) + "\n"


def metrics_kv_csv(report: EvalReport) -> str:
    lines = ["metric,value"]
    for key in _METRIC_KEYS:
        lines.append(f"{key},{_fmt(report.row[key])}")
    lines.append(f"clear_auc,{_fmt(report.clear_auc)}")
    lines.append(f"ambiguous_auc,{_fmt(report.ambiguous_auc)}")
    for (head, split), med in sorted(report.entropy_medians.items()):
        lines.append(f"median_entropy_{head}_{split},{_fmt(med)}")
    return "\n".join(lines) + "\n"


def write_eval_outputs(report: EvalReport, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for head in ("alpha", "rho"):
        _write(os.path.join(out_dir, f"sparsification_{head}.csv"), curve_csv(report.curves[head]))
        _write(os.path.join(out_dir, f"entropy_kde_{head}.csv"), kde_csv(report, head))
    _write(os.path.join(out_dir, "metrics.csv"), metrics_kv_csv(report))


def _write(path, text: str) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(text)


def run_cell(
    data_dir,
    spec: NetworkSpec,
    train_cfg: TrainConfig,
    eval_cfg: EvalConfig,
    out_dir,
    dataset: LoadedDataset | None = None,
):
    """Train one configuration, evaluate it, and write its artifacts."""
    if dataset is None:
        dataset = load_dataset(data_dir)
    os.makedirs(out_dir, exist_ok=True)
    model, history = train(dataset, spec, train_cfg)
    save_checkpoint(model, os.path.join(out_dir, "checkpoint.bin"))
    _write(os.path.join(out_dir, "history.csv"), history_to_csv(history))
    report = evaluate_model(model, dataset, eval_cfg)
    write_eval_outputs(report, out_dir)
    row = {
        "loss": train_cfg.loss,
        "gamma": train_cfg.gamma if train_cfg.loss == "hinge_w1" else 0.0,
        "target_mode": train_cfg.target_mode,
        "seed": train_cfg.seed,
        **report.row,
    }
    return row, report


def _cell_dir(out_dir, loss, gamma, mode, seed) -> str:
    return os.path.join(out_dir, "cells", f"{loss}_g{gamma:.6g}_{mode}_s{seed}")


def _sweep_cell_worker(args):
    data_dir, spec, train_cfg, eval_cfg, cell_out = args
    row, _ = run_cell(data_dir, spec, train_cfg, eval_cfg, cell_out)
    return row


def sweep(
    config: ExperimentConfig,
    data_dir,
    out_dir,
    workers: int = 1,
    timestamp: bool = True,
):
    """Run the (loss x gamma x target mode x seed) grid and aggregate.

    Cell failures are recorded and do not stop the remaining cells.  Gamma
    only varies for the hinge loss; other losses run once per (mode, seed).
    """
    if config.sweep is None:
        raise ConfigError("config has no [sweep] section")
    os.makedirs(out_dir, exist_ok=True)
    if config.source_path:
        shutil.copy(config.source_path, os.path.join(out_dir, "config.ini"))

    cells = []
    for loss in config.sweep.losses:
        gammas = config.sweep.gammas if loss == "hinge_w1" else (0.0,)
        for gamma in gammas:
            for mode in config.sweep.target_modes:
                for seed in config.sweep.seeds:
                    train_cfg = replace(
                        config.train, loss=loss, gamma=gamma, target_mode=mode, seed=seed
                    )
                    cells.append(
                        (
                            os.fspath(data_dir),
                            config.spec,
                            train_cfg,
                            config.eval,
                            _cell_dir(out_dir, loss, gamma, mode, seed),
                        )
                    )

    rows, failures = [], []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [(cell, pool.submit(_sweep_cell_worker, cell)) for cell in cells]
            for cell, fut in futures:
                try:
                    rows.append(fut.result())
                except Exception as exc:  # noqa: BLE001 - recorded per cell
                    failures.append((cell[4], f"{type(exc).__name__}: {exc}"))
    else:
        shared = load_dataset(data_dir)
        for cell in cells:
            data, spec, train_cfg, eval_cfg, cell_out = cell
            try:
                row, _ = run_cell(data, spec, train_cfg, eval_cfg, cell_out, dataset=shared)
                rows.append(row)
            except Exception as exc:  # noqa: BLE001 - recorded per cell
                failures.append((cell_out, f"{type(exc).__name__}: {exc}"))

    _write(os.path.join(out_dir, "results.csv"), results_csv(rows))
    aggregates = aggregate_rows(rows)
    _write(os.path.join(out_dir, "aggregate.csv"), aggregate_csv(aggregates))
    if failures:
        lines = ["cell,error"] + [f"{c},{e}" for c, e in failures]
        _write(os.path.join(out_dir, "failures.csv"), "\n".join(lines) + "\n")

    series = []
    for loss in config.sweep.losses:
        for mode in config.sweep.target_modes:
            pts = [
                (a["gamma"], a["alpha_ause_mean"])
                for a in aggregates
                if a["loss"] == loss and a["target_mode"] == mode
            ]
            if pts:
                pts.sort()
                label = f"{loss} ({mode})"
                series.append((label, [p[0] for p in pts], [p[1] for p in pts]))
    chart = line_chart(
        series,
        title="alpha AUSE vs hinge",
        xlabel="hinge threshold",
        ylabel="alpha AUSE",
        timestamp=timestamp,
    )
    _write(os.path.join(out_dir, "ause_vs_gamma.svg"), chart)
    return rows, failures


# ---------------------------------------------------------------------------
# vanishing-gradient demonstration
# ---------------------------------------------------------------------------


def grad_demo_rows(bins: int, masses=(1e-2, 1e-3, 1e-4, 1e-6)):
    """Gradient magnitudes for the two softmax failure cases, per head.

    Case 1 places mass ``m`` on the correct bin (the rest uniform); case 2
    saturates a wrong bin at mass ``1 - m``.  Both heads see the same logits.
    """
    if bins < 2:
        raise ValueError("need at least 2 bins")
    target = bins // 2
    wrong = 0
    onehot = np.zeros(bins)
    onehot[target] = 1.0
    from .binning import BinGrid, Histogram as _H

    grid = BinGrid(np.concatenate([np.arange(bins, dtype=np.float64), [np.inf]]))
    q = _H(onehot, grid)
    rows = []
    for case, bin_idx in (("case1", target), ("case2", wrong)):
        for mass in masses:
            z = np.zeros(bins)
            if case == "case1":
                z[bin_idx] = np.log(mass * (bins - 1) / (1.0 - mass))
            else:
                z[bin_idx] = np.log((1.0 - mass) * (bins - 1) / mass)
            for head in ("softmax", "softplus"):
                grad = loss_grad(head, z, q, "w1")
                rows.append(
                    {
                        "case": case,
                        "mass": mass,
                        "head": head,
                        "grad_at_target": abs(float(grad[target])),
                        "max_abs_grad": float(np.abs(grad).max()),
                        "l2_norm": float(np.linalg.norm(grad)),
                    }
                )
    return rows


def grad_demo_csv(rows) -> str:
    lines = ["case,mass,head,grad_at_target,max_abs_grad,l2_norm"]
    for r in rows:
        lines.append(
            f"{r['case']},{_fmt(r['mass'])},{r['head']},"
            f"{_fmt(r['grad_at_target'])},{_fmt(r['max_abs_grad'])},{_fmt(r['l2_norm'])}"
        )
    return "\n".join(lines) + "\n"
