"""Discretization grids, histograms over them, and target encodings.

A scalar regression range is cut into K bins; predictions and training
targets are probability vectors over those bins.  Point and mixture ground
truths are encoded by dropping Dirac masses into their containing bins,
optionally blurred with a small Gaussian in bin-index space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BinGrid",
    "Histogram",
    "DiracMixture",
    "make_linear_grid",
    "make_quantile_grid",
    "encode_mixture",
    "build_neighborhood_mixture",
    "gaussian_smooth",
    "softmax_head",
    "softplus_head",
    "decode_argmax",
    "grid_to_text",
    "grid_from_text",
    "save_grid",
    "load_grid",
    "histograms_to_csv",
    "histograms_from_csv",
]


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class BinGrid:
    """K bins over a scalar range, described by K+1 strictly increasing edges.

    All edges are finite except that the last one may be ``+inf``, which makes
    the final bin a catch-all for large values.
    """

    edges: np.ndarray

    def __post_init__(self):
        edges = _frozen_array(self.edges)
        object.__setattr__(self, "edges", edges)
        if edges.ndim != 1 or edges.size < 3:
            raise ValueError("a grid needs at least 3 edges (K >= 2)")
        if not np.all(np.isfinite(edges[:-1])):
            raise ValueError("all edges except the last must be finite")
        if np.isnan(edges[-1]) or edges[-1] == -np.inf:
            raise ValueError("last edge must be finite or +inf")
        if not np.all(np.diff(edges) > 0):
            raise ValueError("edges must be strictly increasing")

    @property
    def K(self) -> int:
        return self.edges.size - 1

    def centers(self) -> np.ndarray:
        """Bin centers; an infinite last bin is represented by its left edge."""
        c = 0.5 * (self.edges[:-1] + self.edges[1:])
        if np.isinf(self.edges[-1]):
            c[-1] = self.edges[-2]
        return c

    def bin_of(self, value: float) -> int:
        """Containing bin index for a finite value.

        A value sitting exactly on an interior edge belongs to the bin to its
        right; values outside the grid clamp to the first/last bin.
        """
        if not np.isfinite(value):
            raise ValueError(f"cannot bin non-finite value {value!r}")
        k = int(np.searchsorted(self.edges, value, side="right")) - 1
        return min(max(k, 0), self.K - 1)

    def same_as(self, other: "BinGrid") -> bool:
        return self is other or np.array_equal(self.edges, other.edges)


@dataclass(frozen=True)
class Histogram:
    """A normalized probability vector over a :class:`BinGrid`."""

    probs: np.ndarray
    grid: BinGrid

    def __post_init__(self):
        probs = _frozen_array(self.probs)
        object.__setattr__(self, "probs", probs)
        if probs.ndim != 1 or probs.size != self.grid.K:
            raise ValueError(
                f"probs has length {probs.size}, grid has K={self.grid.K}"
            )
        if not np.all(np.isfinite(probs)):
            raise ValueError("probabilities must be finite")
        if np.any(probs < 0):
            raise ValueError("probabilities must be non-negative")
        if abs(float(probs.sum()) - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")

    @property
    def K(self) -> int:
        return self.grid.K

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probs)


@dataclass(frozen=True)
class DiracMixture:
    """Weighted point masses; the ground-truth form for uni/multimodal targets."""

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        values = _frozen_array(self.values)
        weights = _frozen_array(self.weights)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("a mixture needs at least one component")
        if values.shape != weights.shape:
            raise ValueError("values and weights must have equal length")
        if not np.all(np.isfinite(values)):
            raise ValueError("component values must be finite")
        if np.any(weights < 0):
            raise ValueError("component weights must be non-negative")
        if abs(float(weights.sum()) - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {weights.sum()!r}, not 1")

    @property
    def components(self) -> list[tuple[float, float]]:
        return [(float(v), float(w)) for v, w in zip(self.values, self.weights)]

    @staticmethod
    def dirac(value: float) -> "DiracMixture":
        return DiracMixture(np.array([value]), np.array([1.0]))

    @staticmethod
    def equal_weight(values) -> "DiracMixture":
        values = np.asarray(values, dtype=np.float64)
        n = values.size
        return DiracMixture(values, np.full(n, 1.0 / n))


def make_linear_grid(lo: float, hi: float, k: int) -> BinGrid:
    """K-1 equal-width bins over [lo, hi] plus a final [hi, +inf) bin."""
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise ValueError("grid bounds must be finite")
    if not lo < hi:
        raise ValueError(f"need lo < hi, got {lo} >= {hi}")
    if k < 2:
        raise ValueError(f"need K >= 2, got {k}")
    edges = np.concatenate([np.linspace(lo, hi, k), [np.inf]])
    return BinGrid(edges)


def make_quantile_grid(samples, k: int) -> BinGrid:
    """Edges at linearly interpolated empirical quantiles i/K.

    Each bin then holds roughly 1/K of the sample mass.  Duplicate quantiles
    (heavy ties in the data) are nudged apart by 1e-9 so no bin has zero width.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if k < 2:
        raise ValueError(f"need K >= 2, got {k}")
    if samples.size == 0 or not np.all(np.isfinite(samples)):
        raise ValueError("samples must be non-empty and finite")
    if np.unique(samples).size < k:
        raise ValueError(
            f"need at least K={k} distinct samples, got {np.unique(samples).size}"
        )
    edges = np.quantile(samples, np.linspace(0.0, 1.0, k + 1), method="linear")
    for i in range(1, edges.size):
        if edges[i] <= edges[i - 1]:
            edges[i] = edges[i - 1] + 1e-9
    return BinGrid(edges)


def encode_mixture(grid: BinGrid, mix: DiracMixture) -> Histogram:
    """Drop each component's weight into its containing bin.

    Boundary values go to the bin on the right; values outside the grid clamp
    to the first/last bin.  The output mass equals the input mass exactly.
    """
    idx = np.searchsorted(grid.edges, mix.values, side="right") - 1
    idx = np.clip(idx, 0, grid.K - 1)
    probs = np.zeros(grid.K)
    np.add.at(probs, idx, mix.weights)
    return Histogram(probs, grid)


def build_neighborhood_mixture(
    center: float, neighbors, center_weight: float
) -> DiracMixture:
    """Center value carries ``center_weight``; the rest splits equally.

    An empty neighbor list yields a pure Dirac at the center regardless of
    the requested weight.
    """
    if not 0.0 < center_weight <= 1.0:
        raise ValueError(f"center_weight must be in (0, 1], got {center_weight}")
    neighbors = np.asarray(list(neighbors), dtype=np.float64)
    if neighbors.size == 0:
        return DiracMixture.dirac(center)
    share = (1.0 - center_weight) / neighbors.size
    values = np.concatenate([[center], neighbors])
    weights = np.concatenate([[center_weight], np.full(neighbors.size, share)])
    return DiracMixture(values, weights)


def gaussian_smooth(h: Histogram, sigma_bins: float) -> Histogram:
    """Blur with a Gaussian in bin-index space, truncated at +-4 sigma.

    The result is renormalized so mass lost at the array boundary does not
    leak.  ``sigma_bins = 0`` is the identity.
    """
    if sigma_bins < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma_bins}")
    if sigma_bins == 0:
        return h
    radius = int(math.ceil(4.0 * sigma_bins))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (offsets / sigma_bins) ** 2)
    kernel /= kernel.sum()
    out = np.convolve(h.probs, kernel, mode="same")
    out /= out.sum()
    return Histogram(out, h.grid)


def _softmax_probs(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _softplus_l1_probs(logits: np.ndarray) -> np.ndarray:
    s = np.logaddexp(0.0, logits)
    return s / s.sum(axis=-1, keepdims=True)


def _check_logits(logits, k: int) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1 or logits.size != k:
        raise ValueError(f"expected {k} logits, got shape {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise ValueError("logits must be finite")
    return logits


def softmax_head(logits, grid: BinGrid) -> Histogram:
    """Exponential normalization with max-subtraction; strictly positive."""
    logits = _check_logits(logits, grid.K)
    return Histogram(_softmax_probs(logits), grid)


def softplus_head(logits, grid: BinGrid) -> Histogram:
    """Elementwise ln(1+e^z) followed by l1 normalization; strictly positive."""
    logits = _check_logits(logits, grid.K)
    return Histogram(_softplus_l1_probs(logits), grid)


def decode_argmax(h: Histogram) -> float:
    """Center of the most probable bin; ties break toward the lowest index."""
    k = int(np.argmax(h.probs))
    return float(h.grid.centers()[k])


# ---------------------------------------------------------------------------
# serialization: grids as "edge <float>" lines, histograms as CSV rows
# ---------------------------------------------------------------------------


def grid_to_text(grid: BinGrid) -> str:
    lines = []
    for e in grid.edges:
        lines.append("edge inf" if np.isinf(e) else f"edge {float(e)!r}")
    return "\n".join(lines) + "\n"


def grid_from_text(text: str) -> BinGrid:
    edges = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        tag, _, value = line.partition(" ")
        if tag != "edge" or not value:
            raise ValueError(f"bad grid line {lineno}: {line!r}")
        edges.append(float(value))
    return BinGrid(np.array(edges))


def save_grid(grid: BinGrid, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(grid_to_text(grid))


def load_grid(path) -> BinGrid:
    with open(path, "r", encoding="ascii") as fh:
        return grid_from_text(fh.read())


def histograms_to_csv(hists) -> str:
    rows = [",".join(repr(float(p)) for p in h.probs) for h in hists]
    return "\n".join(rows) + "\n"


def histograms_from_csv(text: str, grid: BinGrid) -> list[Histogram]:
    hists = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        probo = np.array([float(v) for v in line.split(",")])
        hists.append(Histogram(probo, grid))
    return hists
