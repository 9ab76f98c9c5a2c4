"""Mini-batch Adam training of the two-head model on the line dataset.

Targets are built once up front: the labeled line (or both lines, in
multimodal mode) encoded into the bin grids and blurred with a small
Gaussian.  The run is a deterministic function of (dataset, spec, config),
shuffling included; the best clear-test-AUC parameters are kept.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .binning import (
    BinGrid,
    DiracMixture,
    Histogram,
    decode_argmax,
    encode_mixture,
    gaussian_smooth,
    make_linear_grid,
)
from .losses import LOSSES, HingeConfig
from .metrics import auc_cumulative_error, horizon_error
from .net import NetworkModel, NetworkSpec, batch_loss_grad, forward_probs, init_model
from .synth import LineParams, LoadedDataset

__all__ = [
    "TrainConfig",
    "TrainingDiverged",
    "HistoryRow",
    "Adam",
    "build_grids",
    "encode_targets",
    "train",
    "history_to_csv",
]


class TrainingDiverged(ArithmeticError):
    """Loss or gradient went non-finite; message carries epoch and batch."""


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "hinge_w1"
    gamma: float = 1.0 / 64
    fallback: str = "uniform"
    target_mode: str = "unimodal"  # or "multimodal"
    smoothing_sigma: float = 1.0
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    auc_cutoff: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.target_mode not in ("unimodal", "multimodal"):
            raise ValueError(f"unknown target mode {self.target_mode!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 1:
            raise ValueError("need at least one epoch")
        if self.batch_size < 1:
            raise ValueError("need a positive batch size")
        if self.smoothing_sigma < 0:
            raise ValueError("smoothing sigma must be non-negative")

    def hinge(self) -> HingeConfig:
        gamma = self.gamma if self.loss == "hinge_w1" else 0.0
        return HingeConfig(gamma=gamma, fallback=self.fallback)


@dataclass(frozen=True)
class HistoryRow:
    epoch: int
    train_loss: float
    clear_auc: float


class Adam:
    """Standard Adam over one flat parameter vector."""

    def __init__(self, n: int, lr: float, beta1: float, beta2: float, eps: float):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = np.zeros(n)
        self.v = np.zeros(n)

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        params -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def build_grids(dataset: LoadedDataset, bins: int) -> tuple[BinGrid, BinGrid]:
    """Linear grids spanning the train split's parameter ranges."""
    alphas, rhos = [], []
    for sample in dataset.samples["train"]:
        for line in sample.lines:
            alphas.append(line.alpha)
            rhos.append(line.rho)
    return (
        make_linear_grid(min(alphas), max(alphas), bins),
        make_linear_grid(min(rhos), max(rhos), bins),
    )


def _target_histogram(grid: BinGrid, values, sigma: float) -> np.ndarray:
    mix = DiracMixture.equal_weight(values)
    return gaussian_smooth(encode_mixture(grid, mix), sigma).probs


def encode_targets(
    samples,
    alpha_grid: BinGrid,
    rho_grid: BinGrid,
    target_mode: str,
    sigma: float,
):
    """(N, K) target arrays for both heads."""
    n = len(samples)
    ta = np.empty((n, alpha_grid.K))
    tr = np.empty((n, rho_grid.K))
    for i, sample in enumerate(samples):
        if target_mode == "unimodal":
            alphas = [sample.label_line.alpha]
            rhos = [sample.label_line.rho]
        else:
            alphas = [ln.alpha for ln in sample.lines]
            rhos = [ln.rho for ln in sample.lines]
        ta[i] = _target_histogram(alpha_grid, alphas, sigma)
        tr[i] = _target_histogram(rho_grid, rhos, sigma)
    return ta, tr


def _clear_auc(model: NetworkModel, images, gt_lines, cutoff: float) -> float:
    pa, pr = forward_probs(model, images)
    a_centers = model.alpha_grid.centers()
    r_centers = model.rho_grid.centers()
    alpha_hat = a_centers[np.argmax(pa, axis=1)]
    rho_hat = r_centers[np.argmax(pr, axis=1)]
    h = model.spec.height
    w = model.spec.width
    errors = []
    for i, gt in enumerate(gt_lines):
        pred = _line_or_none(alpha_hat[i], rho_hat[i])
        if pred is None:
            errors.append(1.0)  # unrepresentable prediction counts as a miss
            continue
        errors.append(horizon_error(pred, gt, w, h))
    return auc_cumulative_error(errors, cutoff)


def _line_or_none(alpha: float, rho: float):
    try:
        return LineParams(float(alpha), float(max(rho, 0.0)))
    except ValueError:
        return None


def train(
    dataset: LoadedDataset, spec: NetworkSpec, config: TrainConfig
) -> tuple[NetworkModel, list[HistoryRow]]:
    """Shuffled mini-batch Adam; returns the best clear-AUC model and history."""
    train_samples = dataset.samples["train"]
    if not train_samples:
        raise ValueError("empty train split")
    alpha_grid, rho_grid = build_grids(dataset, spec.bins)
    targets_a, targets_r = encode_targets(
        train_samples, alpha_grid, rho_grid, config.target_mode, config.smoothing_sigma
    )
    images = dataset.stacked_images("train")
    clear_images = dataset.stacked_images("test_clear")
    clear_lines = [s.label_line for s in dataset.samples["test_clear"]]

    seeds = np.random.SeedSequence(config.seed).spawn(2)
    model = init_model(spec, alpha_grid, rho_grid, seed=seeds[0])
    shuffle_rng = np.random.default_rng(seeds[1])
    adam = Adam(
        model.params.size, config.learning_rate, config.beta1, config.beta2, config.eps
    )
    hinge = config.hinge()

    n = images.shape[0]
    history: list[HistoryRow] = []
    best_auc = -1.0
    best_params = model.params.copy()
    for epoch in range(1, config.epochs + 1):
        perm = shuffle_rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            batch = perm[start : start + config.batch_size]
            try:
                loss, grad = batch_loss_grad(
                    model,
                    images[batch],
                    targets_a[batch],
                    targets_r[batch],
                    config.loss,
                    hinge,
                )
            except ArithmeticError as exc:
                raise TrainingDiverged(
                    f"epoch {epoch}, batch {start // config.batch_size}: {exc}"
                ) from exc
            adam.step(model.params, grad)
            loss_sum += loss * batch.size
        auc = _clear_auc(model, clear_images, clear_lines, config.auc_cutoff)
        history.append(HistoryRow(epoch=epoch, train_loss=loss_sum / n, clear_auc=auc))
        if auc > best_auc:
            best_auc = auc
            best_params = model.params.copy()
    best = NetworkModel(spec, alpha_grid, rho_grid, best_params)
    return best, history


def history_to_csv(history) -> str:
    lines = ["epoch,train_loss,clear_auc"]
    for row in history:
        lines.append(f"{row.epoch},{row.train_loss:.6g},{row.clear_auc:.6g}")
    return "\n".join(lines) + "\n"
