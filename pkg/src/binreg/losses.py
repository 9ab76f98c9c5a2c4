"""Training losses over binned distributions, with analytical gradients.

Wasserstein-1 comes in two equivalent forms: the CDF-difference sum for
full-distribution targets, and the per-bin distance sum for Dirac targets.
Both operate in bin-index units, so grids with an infinite last bin stay
well defined.  The hinge variant subtracts a threshold from the prediction,
clamps at zero and renormalizes before measuring the distance, which stops
weak secondary modes from being penalized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .binning import Histogram, _softmax_probs, _softplus_l1_probs

__all__ = [
    "HingeConfig",
    "GridMismatchError",
    "DegenerateHingeError",
    "GradAnalysis",
    "w1_cdf",
    "w1_dirac",
    "hinge_renormalize",
    "hinge_w1",
    "nll",
    "loss_grad",
    "softmax_w1_grad_analysis",
    "HEADS",
    "LOSSES",
]

NLL_EPS = 1e-12

HEADS = ("softmax", "softplus")
LOSSES = ("nll", "w1", "hinge_w1")


class GridMismatchError(ValueError):
    """Prediction and target histograms live on different grids."""


class DegenerateHingeError(ValueError):
    """Every bin fell below the hinge and the config forbids the fallback."""


@dataclass(frozen=True)
class HingeConfig:
    """Hinge threshold and the behavior when it swallows the whole histogram.

    ``gamma`` is normally 1/K.  With ``fallback="uniform"`` an all-hinged
    prediction renormalizes to the uniform distribution (a random guess);
    ``fallback="error"`` raises instead, for debugging.
    """

    gamma: float = 0.0
    fallback: str = "uniform"

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        if self.fallback not in ("uniform", "error"):
            raise ValueError(f"unknown fallback mode {self.fallback!r}")


def _check_same_grid(p: Histogram, q: Histogram) -> None:
    if not p.grid.same_as(q.grid):
        raise GridMismatchError("histograms are defined on different grids")


def w1_cdf(p: Histogram, q: Histogram) -> float:
    """Sum of absolute CDF differences, in bin-index units.

    Symmetric, and zero exactly when p equals q.
    """
    _check_same_grid(p, q)
    return float(np.abs(np.cumsum(p.probs - q.probs)).sum())


def w1_dirac(p: Histogram, target_bin: int, m: int = 1) -> float:
    """Per-bin distance form for a Dirac target: (sum_k p[k] |k-j*|^m)^(1/m)."""
    if not 0 <= target_bin < p.K:
        raise ValueError(f"target_bin {target_bin} outside [0, {p.K})")
    if m < 1:
        raise ValueError(f"order m must be >= 1, got {m}")
    dist = np.abs(np.arange(p.K) - target_bin, dtype=np.float64)
    total = float((p.probs * dist**m).sum())
    return total ** (1.0 / m) if m > 1 else total


def hinge_renormalize(p: Histogram, cfg: HingeConfig) -> Histogram:
    """Subtract gamma, clamp at zero, renormalize to sum one.

    gamma = 0 returns the input unchanged.  If nothing survives the hinge the
    configured fallback applies.
    """
    if cfg.gamma == 0.0:
        return p
    hinged = np.maximum(p.probs - cfg.gamma, 0.0)
    total = hinged.sum()
    if total == 0.0:
        if cfg.fallback == "error":
            raise DegenerateHingeError("all bins at or below the hinge")
        return Histogram(np.full(p.K, 1.0 / p.K), p.grid)
    return Histogram(hinged / total, p.grid)


def hinge_w1(p: Histogram, q: Histogram, cfg: HingeConfig) -> float:
    """CDF-form Wasserstein-1 after hinging the prediction only."""
    _check_same_grid(p, q)
    return w1_cdf(hinge_renormalize(p, cfg), q)


def nll(p: Histogram, q: Histogram) -> float:
    """Cross-entropy -sum q ln(p + eps); -ln p[j*] for a one-hot target."""
    _check_same_grid(p, q)
    return float(-(q.probs * np.log(p.probs + NLL_EPS)).sum())


# ---------------------------------------------------------------------------
# analytical gradients
#
# Everything below works on batched (B, K) arrays so the trainer can reuse it;
# the public loss_grad wraps the single-sample case.
# ---------------------------------------------------------------------------


def _nll_value_grad_p(p, q):
    val = -(q * np.log(p + NLL_EPS)).sum(axis=-1)
    grad = -q / (p + NLL_EPS)
    return val, grad


def _w1_value_grad_p(p, q):
    # The K-th CDF difference is identically zero (both masses sum to one);
    # forcing it avoids a spurious +-1 sign from rounding noise.
    d = np.cumsum(p - q, axis=-1)
    val = np.abs(d).sum(axis=-1)
    signs = np.sign(d)
    signs[..., -1] = 0.0
    grad = np.flip(np.cumsum(np.flip(signs, -1), axis=-1), -1)
    return val, grad


def _hinge_w1_value_grad_p(p, q, cfg: HingeConfig):
    if cfg.gamma == 0.0:
        return _w1_value_grad_p(p, q)
    k = p.shape[-1]
    hinged = np.maximum(p - cfg.gamma, 0.0)
    total = hinged.sum(axis=-1, keepdims=True)
    dead = total[..., 0] == 0.0
    if np.any(dead) and cfg.fallback == "error":
        raise DegenerateHingeError("all bins at or below the hinge")
    safe_total = np.where(total == 0.0, 1.0, total)
    pbar = np.where(total == 0.0, 1.0 / k, hinged / safe_total)
    val, gbar = _w1_value_grad_p(pbar, q)
    # renormalization Jacobian, then the ReLU mask (subgradient 0 at the kink)
    inner = (gbar * pbar).sum(axis=-1, keepdims=True)
    grad = (gbar - inner) / safe_total * (p > cfg.gamma)
    grad = np.where(dead[..., None], 0.0, grad)
    return val, grad


def _softmax_forward_backward(logits):
    p = _softmax_probs(logits)

    def backward(grad_p):
        inner = (grad_p * p).sum(axis=-1, keepdims=True)
        return p * (grad_p - inner)

    return p, backward


def _softplus_forward_backward(logits):
    s = np.logaddexp(0.0, logits)
    total = s.sum(axis=-1, keepdims=True)
    p = s / total
    sig = np.exp(logits - s)  # stable sigmoid: e^(z - softplus(z)), exponent <= 0

    def backward(grad_p):
        inner = (grad_p * p).sum(axis=-1, keepdims=True)
        return sig * (grad_p - inner) / total

    return p, backward


_HEAD_FNS = {
    "softmax": _softmax_forward_backward,
    "softplus": _softplus_forward_backward,
}

_LOSS_FNS = {
    "nll": lambda p, q, cfg: _nll_value_grad_p(p, q),
    "w1": lambda p, q, cfg: _w1_value_grad_p(p, q),
    "hinge_w1": _hinge_w1_value_grad_p,
}


def head_loss_grad_batch(head, logits, targets, loss, cfg=HingeConfig()):
    """Per-sample loss values and d(loss)/d(logits) for a (B, K) batch."""
    if head not in _HEAD_FNS:
        raise ValueError(f"unknown head {head!r}")
    if loss not in _LOSS_FNS:
        raise ValueError(f"unknown loss {loss!r}")
    p, head_backward = _HEAD_FNS[head](logits)
    val, grad_p = _LOSS_FNS[loss](p, targets, cfg)
    return val, head_backward(grad_p)


def loss_grad(head, logits, q: Histogram, loss, cfg: HingeConfig = HingeConfig()):
    """Exact gradient of the selected scalar loss with respect to the logits."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1 or logits.size != q.K:
        raise ValueError(f"expected {q.K} logits, got shape {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise ValueError("logits must be finite")
    _, grad = head_loss_grad_batch(head, logits[None, :], q.probs[None, :], loss, cfg)
    grad = grad[0]
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite gradient")
    return grad


@dataclass(frozen=True)
class GradAnalysis:
    """Closed-form softmax+W1 gradient and its two failure-mode scores."""

    grad: np.ndarray
    case1_score: float  # |d/dz at the correct bin|: vanishes when its mass does
    case2_score: float  # max_k |d/dz_k|: vanishes when a wrong mode saturates


def softmax_w1_grad_analysis(logits, target_bin: int) -> GradAnalysis:
    """Evaluate d W1(onehot(j*), softmax(z)) / dz in closed form.

    Component k equals g_k (|k - j*| - sum_i |i - j*| g_i); it collapses both
    when the correct bin's mass is tiny and when a wrong mode holds all mass.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise ValueError("logits must be finite")
    k = logits.size
    if not 0 <= target_bin < k:
        raise ValueError(f"target_bin {target_bin} outside [0, {k})")
    g = _softmax_probs(logits)
    dist = np.abs(np.arange(k) - target_bin, dtype=np.float64)
    w1 = float((dist * g).sum())
    grad = g * (dist - w1)
    return GradAnalysis(
        grad=grad,
        case1_score=float(abs(grad[target_bin])),
        case2_score=float(np.abs(grad).max()),
    )
