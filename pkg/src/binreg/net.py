"""A small trainable conv net with two K-bin output heads.

Forward and reverse passes are written directly in numpy (convolutions as a
handful of strided GEMMs), with parameters kept in one flat float64 vector so
the optimizer and checkpoint format stay trivial.  Everything is double
precision, which keeps finite-difference gradient checks tight.
"""

from __future__ import annotations

import hashlib
import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict

import numpy as np

from .binning import BinGrid, Histogram, _softmax_probs, _softplus_l1_probs
from .losses import HingeConfig, head_loss_grad_batch

__all__ = [
    "NetworkSpec",
    "NetworkModel",
    "CheckpointError",
    "NumericsError",
    "init_model",
    "forward",
    "predict_batch",
    "batch_loss_grad",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_MAGIC = b"BINREGN1"
CHECKPOINT_VERSION = 1


class CheckpointError(RuntimeError):
    """A checkpoint file failed validation."""


class NumericsError(ArithmeticError):
    """A non-finite value appeared; the message names the offending stage."""


@dataclass(frozen=True)
class NetworkSpec:
    """Topology: conv blocks, a pooling stage, and one linear layer to 2K logits."""

    height: int = 64
    width: int = 64
    conv_channels: tuple[int, ...] = (8, 16, 32)
    kernel: int = 3
    stride: int = 2
    leaky_slope: float = 0.01
    pool: str = "flatten"  # "flatten" or "gap"
    bins: int = 64
    head: str = "softplus"  # "softplus" or "softmax"
    input_offset: float = 0.5  # subtracted from pixels, centering the background

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(self.conv_channels))
        if self.height < 1 or self.width < 1:
            raise ValueError("input dimensions must be positive")
        if len(self.conv_channels) == 0 or any(c < 1 for c in self.conv_channels):
            raise ValueError("conv channel counts must be positive")
        if self.kernel < 1 or self.stride < 1:
            raise ValueError("kernel and stride must be positive")
        if self.pool not in ("gap", "flatten"):
            raise ValueError(f"unknown pool mode {self.pool!r}")
        if self.bins < 2:
            raise ValueError("need at least 2 bins per head")
        if self.head not in ("softmax", "softplus"):
            raise ValueError(f"unknown head {self.head!r}")
        h, w = self.height, self.width
        for _ in self.conv_channels:
            h = self._conv_out(h)
            w = self._conv_out(w)
            if h < 1 or w < 1:
                raise ValueError("conv stack shrinks the image to nothing")

    def _conv_out(self, size: int) -> int:
        pad = self.kernel // 2
        return (size + 2 * pad - self.kernel) // self.stride + 1

    def feature_map_hw(self) -> tuple[int, int]:
        h, w = self.height, self.width
        for _ in self.conv_channels:
            h, w = self._conv_out(h), self._conv_out(w)
        return h, w

    def feature_width(self) -> int:
        h, w = self.feature_map_hw()
        c = self.conv_channels[-1]
        return c if self.pool == "gap" else c * h * w

    def layout(self) -> list[tuple[str, tuple[int, ...]]]:
        entries = []
        c_in = 1
        for i, c_out in enumerate(self.conv_channels):
            entries.append((f"conv{i}_w", (c_out, c_in, self.kernel, self.kernel)))
            entries.append((f"conv{i}_b", (c_out,)))
            c_in = c_out
        entries.append(("fc_w", (2 * self.bins, self.feature_width())))
        entries.append(("fc_b", (2 * self.bins,)))
        return entries

    def param_count(self) -> int:
        return sum(int(np.prod(shape)) for _, shape in self.layout())


@dataclass
class NetworkModel:
    spec: NetworkSpec
    alpha_grid: BinGrid
    rho_grid: BinGrid
    params: np.ndarray  # flat float64 vector

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.params.shape != (self.spec.param_count(),):
            raise ValueError(
                f"parameter vector has {self.params.size} entries, "
                f"spec expects {self.spec.param_count()}"
            )
        if self.alpha_grid.K != self.spec.bins or self.rho_grid.K != self.spec.bins:
            raise ValueError("grid sizes must match spec.bins")

    def views(self) -> dict[str, np.ndarray]:
        """Named reshaped views into the flat parameter vector."""
        out = {}
        offset = 0
        for name, shape in self.spec.layout():
            size = int(np.prod(shape))
            out[name] = self.params[offset : offset + size].reshape(shape)
            offset += size
        return out

    def copy(self) -> "NetworkModel":
        return NetworkModel(self.spec, self.alpha_grid, self.rho_grid, self.params.copy())


def init_model(
    spec: NetworkSpec, alpha_grid: BinGrid, rho_grid: BinGrid, seed: int
) -> NetworkModel:
    """Fan-in-scaled uniform weights, zero biases, deterministic in the seed."""
    rng = np.random.default_rng(seed)
    chunks = []
    for name, shape in spec.layout():
        if name.endswith("_b"):
            chunks.append(np.zeros(int(np.prod(shape))))
        else:
            fan_in = int(np.prod(shape[1:]))
            bound = np.sqrt(6.0 / fan_in)
            chunks.append(rng.uniform(-bound, bound, size=int(np.prod(shape))))
    return NetworkModel(spec, alpha_grid, rho_grid, np.concatenate(chunks))


# ---------------------------------------------------------------------------
# layer primitives (shift-and-add convolutions over strided slices)
# ---------------------------------------------------------------------------


def _im2col(xp, kh, kw, stride, oh, ow):
    """Patch matrix of shape (B*OH*OW, C*kh*kw) from the padded input."""
    bsz, c_in = xp.shape[:2]
    cols = np.empty((bsz, oh, ow, c_in, kh, kw))
    for di in range(kh):
        for dj in range(kw):
            cols[..., di, dj] = xp[
                :, :, di : di + stride * oh : stride, dj : dj + stride * ow : stride
            ].transpose(0, 2, 3, 1)
    return cols.reshape(bsz * oh * ow, c_in * kh * kw)


def _conv_forward(x, w, b, stride):
    bsz, c_in, h, w_in = x.shape
    f, _, kh, kw = w.shape
    pad = kh // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w_in + 2 * pad - kw) // stride + 1
    cols = _im2col(xp, kh, kw, stride, oh, ow)
    out = cols @ w.reshape(f, -1).T + b
    out = out.reshape(bsz, oh, ow, f).transpose(0, 3, 1, 2)
    return out, (cols, xp.shape)


def _conv_backward(dout, cache, w, stride, x_shape, need_dx=True):
    cols, xp_shape = cache
    bsz, c_in, h, w_in = x_shape
    f, _, kh, kw = w.shape
    pad = kh // 2
    _, _, oh, ow = dout.shape
    dflat = dout.transpose(0, 2, 3, 1).reshape(-1, f)
    dw = (dflat.T @ cols).reshape(w.shape)
    db = dflat.sum(axis=0)
    if not need_dx:
        return None, dw, db
    dcols = (dflat @ w.reshape(f, -1)).reshape(bsz, oh, ow, c_in, kh, kw)
    dxp = np.zeros(xp_shape)
    for di in range(kh):
        for dj in range(kw):
            dxp[
                :, :, di : di + stride * oh : stride, dj : dj + stride * ow : stride
            ] += dcols[..., di, dj].transpose(0, 3, 1, 2)
    dx = dxp[:, :, pad : pad + h, pad : pad + w_in] if pad else dxp
    return dx, dw, db


def _forward_cached(model: NetworkModel, images: np.ndarray):
    """Run the conv stack and heads, keeping what the reverse pass needs."""
    spec = model.spec
    views = model.views()
    x = images[:, None, :, :] - spec.input_offset
    caches = []
    for i in range(len(spec.conv_channels)):
        z, conv_cache = _conv_forward(
            x, views[f"conv{i}_w"], views[f"conv{i}_b"], spec.stride
        )
        a = np.where(z > 0, z, spec.leaky_slope * z)
        caches.append((conv_cache, x.shape, z))
        x = a
    bsz = x.shape[0]
    if spec.pool == "gap":
        feat = x.mean(axis=(2, 3))
    else:
        feat = x.reshape(bsz, -1)
    logits = feat @ views["fc_w"].T + views["fc_b"]
    return logits, (caches, x.shape, feat)


def _backward_from_logits(model: NetworkModel, dlogits: np.ndarray, cache):
    spec = model.spec
    views = model.views()
    caches, last_shape, feat = cache
    grads = {}
    grads["fc_w"] = dlogits.T @ feat
    grads["fc_b"] = dlogits.sum(axis=0)
    dfeat = dlogits @ views["fc_w"]
    bsz, c, h, w = last_shape
    if spec.pool == "gap":
        dx = np.broadcast_to(dfeat[:, :, None, None], last_shape) / (h * w)
        dx = np.ascontiguousarray(dx)
    else:
        dx = dfeat.reshape(last_shape)
    for i in reversed(range(len(spec.conv_channels))):
        conv_cache, x_shape, z = caches[i]
        dz = dx * np.where(z > 0, 1.0, spec.leaky_slope)
        dx, dw, db = _conv_backward(
            dz, conv_cache, views[f"conv{i}_w"], spec.stride, x_shape, need_dx=i > 0
        )
        grads[f"conv{i}_w"] = dw
        grads[f"conv{i}_b"] = db
    flat = np.concatenate(
        [grads[name].ravel() for name, _ in spec.layout()]
    )
    return flat


def _head_probs(spec: NetworkSpec, logits: np.ndarray):
    k = spec.bins
    fn = _softmax_probs if spec.head == "softmax" else _softplus_l1_probs
    return fn(logits[:, :k]), fn(logits[:, k:])


def _check_images(spec: NetworkSpec, images: np.ndarray) -> np.ndarray:
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 2:
        images = images[None, :, :]
    if images.ndim != 3 or images.shape[1:] != (spec.height, spec.width):
        raise ValueError(
            f"expected images of shape (*, {spec.height}, {spec.width}), "
            f"got {images.shape}"
        )
    return images


def forward(model: NetworkModel, image: np.ndarray) -> tuple[Histogram, Histogram]:
    """Predict the two per-parameter histograms for a single image."""
    images = _check_images(model.spec, image)
    if images.shape[0] != 1:
        raise ValueError("forward takes a single image; see predict_batch")
    pa, pr = forward_probs(model, images)
    return (
        Histogram(pa[0], model.alpha_grid),
        Histogram(pr[0], model.rho_grid),
    )


def forward_probs(model: NetworkModel, images: np.ndarray):
    """Batched head probabilities as two (B, K) arrays."""
    images = _check_images(model.spec, images)
    logits, _ = _forward_cached(model, images)
    if not np.all(np.isfinite(logits)):
        raise NumericsError("non-finite activations in head logits")
    return _head_probs(model.spec, logits)


def predict_batch(model: NetworkModel, images, workers: int = 1):
    """Order-preserving batched forward; identical to per-sample forward."""
    images = np.asarray(images, dtype=np.float64)
    if images.size == 0:
        return []
    images = _check_images(model.spec, images)
    if workers > 1:
        chunks = np.array_split(np.arange(images.shape[0]), workers)
        chunks = [c for c in chunks if c.size]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda c: forward_probs(model, images[c]), chunks))
        pa = np.concatenate([p[0] for p in parts])
        pr = np.concatenate([p[1] for p in parts])
    else:
        pa, pr = forward_probs(model, images)
    return [
        (Histogram(pa[i], model.alpha_grid), Histogram(pr[i], model.rho_grid))
        for i in range(images.shape[0])
    ]


def batch_loss_grad(
    model: NetworkModel,
    images: np.ndarray,
    alpha_targets: np.ndarray,
    rho_targets: np.ndarray,
    loss: str,
    cfg: HingeConfig = HingeConfig(),
):
    """Mean two-head loss over the batch and its gradient in the flat params.

    The two head losses are summed with equal weight.
    """
    images = _check_images(model.spec, images)
    bsz = images.shape[0]
    if bsz == 0:
        raise ValueError("empty batch")
    k = model.spec.bins
    logits, cache = _forward_cached(model, images)
    if not np.all(np.isfinite(logits)):
        raise NumericsError("non-finite activations in head logits")
    val_a, dza = head_loss_grad_batch(
        model.spec.head, logits[:, :k], alpha_targets, loss, cfg
    )
    val_r, dzr = head_loss_grad_batch(
        model.spec.head, logits[:, k:], rho_targets, loss, cfg
    )
    total = float((val_a + val_r).mean())
    dlogits = np.concatenate([dza, dzr], axis=1) / bsz
    grad = _backward_from_logits(model, dlogits, cache)
    if not np.isfinite(total):
        raise NumericsError(f"non-finite {loss} loss value")
    if not np.all(np.isfinite(grad)):
        raise NumericsError("non-finite parameter gradient")
    return total, grad


# ---------------------------------------------------------------------------
# checkpoint format: magic, version, JSON spec block, little-endian float64
# parameters, trailing SHA-256
# ---------------------------------------------------------------------------


def _grid_edges_for_json(grid: BinGrid) -> list:
    return [("inf" if np.isinf(e) else float(e)) for e in grid.edges]


def _grid_from_json(edges) -> BinGrid:
    return BinGrid(np.array([np.inf if e == "inf" else float(e) for e in edges]))


def save_checkpoint(model: NetworkModel, path) -> None:
    header = json.dumps(
        {
            "spec": asdict(model.spec),
            "alpha_grid": _grid_edges_for_json(model.alpha_grid),
            "rho_grid": _grid_edges_for_json(model.rho_grid),
            "layout": [[name, list(shape)] for name, shape in model.spec.layout()],
        },
        sort_keys=True,
    ).encode("utf-8")
    body = (
        CHECKPOINT_MAGIC
        + struct.pack("<II", CHECKPOINT_VERSION, len(header))
        + header
        + struct.pack("<Q", model.params.size)
        + model.params.astype("<f8").tobytes()
    )
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(hashlib.sha256(body).digest())


def load_checkpoint(path, expected_spec: NetworkSpec | None = None) -> NetworkModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(CHECKPOINT_MAGIC) + 8 + 8 + 32:
        raise CheckpointError("checkpoint file too short")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError("checkpoint checksum mismatch")
    if body[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError("bad checkpoint magic bytes")
    off = len(CHECKPOINT_MAGIC)
    version, header_len = struct.unpack_from("<II", body, off)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    off += 8
    try:
        header = json.loads(body[off : off + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
    off += header_len
    (n_params,) = struct.unpack_from("<Q", body, off)
    off += 8
    params = np.frombuffer(body, dtype="<f8", count=n_params, offset=off).astype(
        np.float64
    )
    spec_fields = dict(header["spec"])
    spec_fields["conv_channels"] = tuple(spec_fields["conv_channels"])
    spec = NetworkSpec(**spec_fields)
    if expected_spec is not None:
        for name in spec.__dataclass_fields__:
            got, want = getattr(spec, name), getattr(expected_spec, name)
            if got != want:
                raise CheckpointError(
                    f"checkpoint spec mismatch in field {name!r}: "
                    f"file has {got!r}, expected {want!r}"
                )
    if n_params != spec.param_count():
        raise CheckpointError(
            f"checkpoint has {n_params} parameters, spec expects {spec.param_count()}"
        )
    return NetworkModel(
        spec=spec,
        alpha_grid=_grid_from_json(header["alpha_grid"]),
        rho_grid=_grid_from_json(header["rho_grid"]),
        params=params,
    )
