"""Scalar uncertainty measures and uncertainty-quality metrics.

Sparsification removes the most uncertain test samples first and watches the
mean absolute error of what remains; the gap to the best possible removal
order (the oracle) is summarized by its area, AUSE.  The multimodal CRPS
scores the predicted distribution itself against a Dirac-mixture ground
truth.  Both operate in bin-index units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .binning import DiracMixture, Histogram, encode_mixture
from .synth import LineParams

__all__ = [
    "EvalRecord",
    "SparsificationResult",
    "entropy",
    "variance",
    "inv_max",
    "sparsification",
    "crps_mixture",
    "horizon_error",
    "auc_cumulative_error",
    "kde",
    "UNCERTAINTY_MEASURES",
]


@dataclass(frozen=True)
class EvalRecord:
    """One test sample's absolute error paired with its predicted uncertainty."""

    error: float
    uncertainty: float

    def __post_init__(self):
        if not np.isfinite(self.error) or self.error < 0:
            raise ValueError(f"error must be a finite non-negative real, got {self.error!r}")
        if not np.isfinite(self.uncertainty):
            raise ValueError(f"uncertainty must be finite, got {self.uncertainty!r}")


@dataclass(frozen=True)
class SparsificationResult:
    fractions: np.ndarray
    sparsification_curve: np.ndarray
    oracle_curve: np.ndarray
    error_curve: np.ndarray
    ause: float


def entropy(h: Histogram) -> float:
    """Shannon entropy in nats, with 0 ln 0 = 0; ranges over [0, ln K]."""
    p = h.probs
    terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return float(-terms.sum())


def variance(h: Histogram) -> float:
    """Distribution variance in squared bin-index units."""
    k = np.arange(h.K, dtype=np.float64)
    mean = float((k * h.probs).sum())
    return float((k * k * h.probs).sum()) - mean * mean


def inv_max(h: Histogram) -> float:
    """Inverse of the largest bin mass; 1 for a one-hot, K for uniform."""
    return float(1.0 / h.probs.max())


UNCERTAINTY_MEASURES = {
    "entropy": entropy,
    "variance": variance,
    "inv_max": inv_max,
}


def _removal_curve(errors: np.ndarray, order: np.ndarray, steps: int) -> np.ndarray:
    """Normalized MAE of what remains after removing ceil(p*n) leading samples."""
    n = errors.size
    reordered = errors[order]
    suffix = np.concatenate([np.cumsum(reordered[::-1])[::-1], [0.0]])
    # ceil(p*n), capped so at least one sample always remains (an empty-set
    # MAE would be undefined even though the fraction never reaches 1)
    removed = np.minimum(np.ceil(np.arange(steps) / steps * n).astype(int), n - 1)
    remaining = n - removed
    full_mae = suffix[0] / n
    return (suffix[removed] / remaining) / full_mae


def sparsification(records, steps: int = 100) -> SparsificationResult:
    """Sparsification and oracle curves over fractions {0, ..., (steps-1)/steps}.

    Removal order is highest uncertainty first (highest error for the oracle),
    ties broken by the stable original index.  AUSE is the trapezoidal area of
    the curve difference over the fraction grid.
    """
    records = list(records)
    n = len(records)
    if n < 2:
        raise ValueError(f"need at least 2 records, got {n}")
    if steps < 2:
        raise ValueError(f"need at least 2 steps, got {steps}")
    errors = np.array([r.error for r in records], dtype=np.float64)
    uncert = np.array([r.uncertainty for r in records], dtype=np.float64)
    if errors.mean() <= 0.0:
        raise ValueError("full-set MAE is zero; curves are undefined")

    idx = np.arange(n)
    by_uncertainty = np.lexsort((idx, -uncert))
    by_error = np.lexsort((idx, -errors))
    fractions = np.arange(steps, dtype=np.float64) / steps
    spars = _removal_curve(errors, by_uncertainty, steps)
    oracle = _removal_curve(errors, by_error, steps)
    gap = spars - oracle
    ause = float(np.sum(0.5 * (gap[1:] + gap[:-1]) * np.diff(fractions)))
    return SparsificationResult(
        fractions=fractions,
        sparsification_curve=spars,
        oracle_curve=oracle,
        error_curve=gap,
        ause=ause,
    )


def crps_mixture(p: Histogram, mix: DiracMixture) -> float:
    """Sum of squared CDF differences against the binned Dirac mixture."""
    q = encode_mixture(p.grid, mix)
    d = p.cdf() - q.cdf()
    return float((d * d).sum())


def horizon_error(
    pred: LineParams, gt: LineParams, width: float, height: float
) -> float:
    """Largest vertical gap between the lines at the image borders, over height."""
    gap0 = abs(pred.y_at(0.0) - gt.y_at(0.0))
    gap1 = abs(pred.y_at(width) - gt.y_at(width))
    return max(gap0, gap1) / height


def auc_cumulative_error(errors, cutoff: float) -> float:
    """Area under the empirical CDF of errors over [0, cutoff], scaled to [0, 1].

    Computed as the exact area of the step function, which is what trapezoidal
    integration over all of its breakpoints yields.  A perfect detector
    (all errors zero) scores 1.
    """
    errors = np.asarray(errors, dtype=np.float64)
    if errors.size == 0:
        raise ValueError("no errors to integrate")
    if not np.all(np.isfinite(errors)) or np.any(errors < 0):
        raise ValueError("errors must be finite and non-negative")
    if not cutoff > 0:
        raise ValueError(f"cutoff must be positive, got {cutoff}")
    return float(np.clip(cutoff - errors, 0.0, None).mean() / cutoff)


def kde(values, bandwidth: float, eval_points) -> np.ndarray:
    """Gaussian kernel density estimate at each evaluation point."""
    values = np.asarray(values, dtype=np.float64)
    eval_points = np.asarray(eval_points, dtype=np.float64)
    if values.size == 0:
        raise ValueError("need at least one value")
    if not bandwidth > 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    z = (eval_points[:, None] - values[None, :]) / bandwidth
    dens = np.exp(-0.5 * z * z).mean(axis=1) / (bandwidth * math.sqrt(2.0 * math.pi))
    return dens
