"""Synthetic line images with controllable aleatoric uncertainty.

Each image shows one or two randomly placed lines over Gaussian noise.
Two-line images are inherently ambiguous: a randomly picked line serves as
the unimodal label, while both lines together form the multimodal ground
truth.  Generation is a pure function of (config, base_seed); every sample
gets its own seed derived by hashing, so workers can fan out freely.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field, asdict

import numpy as np

__all__ = [
    "LineParams",
    "SynthSample",
    "DatasetConfig",
    "ManifestRecord",
    "DatasetManifest",
    "LoadedDataset",
    "DatasetError",
    "ChecksumError",
    "sample_line",
    "render",
    "generate_dataset",
    "load_dataset",
    "write_pgm",
    "read_pgm",
    "sample_seed",
    "visible_segment_length",
]

SPLITS = ("train", "test_clear", "test_ambiguous")

MANIFEST_COLUMNS = (
    "split,index,file,alpha0,rho0,alpha1,rho1,unimodal_index,seed"
)


class DatasetError(RuntimeError):
    """Generation or loading failed in a structured way."""


class ChecksumError(DatasetError):
    """A file on disk does not match its recorded checksum."""


@dataclass(frozen=True)
class LineParams:
    """A line in normal form (-sin a, cos a, -rho) . (x, y, 1) = 0."""

    alpha: float  # radians in [-pi/2, pi/2]
    rho: float  # pixels, >= 0

    def __post_init__(self):
        if not np.isfinite(self.alpha) or abs(self.alpha) > math.pi / 2:
            raise ValueError(f"alpha {self.alpha!r} outside [-pi/2, pi/2]")
        if not np.isfinite(self.rho) or self.rho < 0:
            raise ValueError(f"rho {self.rho!r} must be a non-negative real")

    def y_at(self, x: float) -> float:
        """Height of the line above x; undefined for near-vertical lines."""
        if abs(self.alpha) >= math.pi / 2 - 1e-6:
            raise ValueError("near-vertical line has no y(x) representation")
        return math.tan(self.alpha) * x + self.rho / math.cos(self.alpha)


@dataclass(frozen=True)
class SynthSample:
    image: np.ndarray  # (H, W) grayscale in [0, 1]
    lines: tuple[LineParams, ...]
    unimodal_index: int
    seed: int

    def __post_init__(self):
        if not 1 <= len(self.lines) <= 2:
            raise ValueError("a sample carries 1 or 2 lines")
        if not 0 <= self.unimodal_index < len(self.lines):
            raise ValueError("unimodal_index must point at a line")

    @property
    def label_line(self) -> LineParams:
        return self.lines[self.unimodal_index]


@dataclass(frozen=True)
class DatasetConfig:
    width: int = 64
    height: int = 64
    train_one_line: int = 2000
    train_two_line: int = 2000
    test_clear: int = 500
    test_ambiguous: int = 500
    noise_sigma: float = 0.1
    thickness: float = 1.5
    contrast: float = 0.5
    alpha_range: float = math.pi / 3
    min_visible_frac: float = 0.5
    min_sep_alpha: float = 0.15
    min_sep_rho_frac: float = 0.1
    separation_filter: bool = True

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ValueError("image dimensions must be at least 2x2")
        for name in ("train_one_line", "train_two_line", "test_clear", "test_ambiguous"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0 < self.alpha_range < math.pi / 2:
            raise ValueError("alpha_range must be in (0, pi/2)")


@dataclass(frozen=True)
class ManifestRecord:
    split: str
    index: int
    file: str
    lines: tuple[LineParams, ...]
    unimodal_index: int
    seed: int


@dataclass(frozen=True)
class DatasetManifest:
    config: DatasetConfig
    base_seed: int
    records: tuple[ManifestRecord, ...]

    def counts(self) -> dict[str, int]:
        out = {s: 0 for s in SPLITS}
        for r in self.records:
            out[r.split] += 1
        return out


@dataclass
class LoadedDataset:
    manifest: DatasetManifest
    samples: dict[str, list[SynthSample]]

    def stacked_images(self, split: str) -> np.ndarray:
        return np.stack([s.image for s in self.samples[split]])


# ---------------------------------------------------------------------------
# geometry and sampling
# ---------------------------------------------------------------------------


def visible_segment_length(line: LineParams, width: float, height: float) -> float:
    """Length of the part of the line inside [0, width] x [0, height]."""
    ca = math.cos(line.alpha)
    ta = math.tan(line.alpha)
    y0 = line.rho / ca  # height at x = 0
    if ta == 0.0:
        return float(width) if 0.0 <= y0 <= height else 0.0
    # x where the line crosses y = 0 and y = height
    xa = -y0 / ta
    xb = (height - y0) / ta
    x_lo = max(0.0, min(xa, xb))
    x_hi = min(float(width), max(xa, xb))
    if x_hi <= x_lo:
        return 0.0
    return (x_hi - x_lo) / ca


def _rho_max(alpha: float, width: float, height: float) -> float:
    # largest value of -x sin(a) + y cos(a) over the image rectangle
    return height * math.cos(alpha) + width * max(0.0, -math.sin(alpha))


def sample_line(
    rng: np.random.Generator,
    width: int,
    height: int,
    alpha_range: float = math.pi / 3,
    min_visible_frac: float = 0.5,
    max_attempts: int = 1000,
) -> LineParams:
    """Uniform slope angle, offset rejection-sampled for a long visible segment.

    Alpha is drawn once (keeping its marginal exactly uniform); rho redraws
    until the line's visible segment reaches ``min_visible_frac * min(W, H)``.
    """
    alpha = float(rng.uniform(-alpha_range, alpha_range))
    min_len = min_visible_frac * min(width, height)
    hi = _rho_max(alpha, width, height)
    for _ in range(max_attempts):
        rho = float(rng.uniform(0.0, hi))
        line = LineParams(alpha, rho)
        if visible_segment_length(line, width, height) >= min_len:
            return line
    raise DatasetError(
        f"no visible line found in {max_attempts} attempts "
        f"(alpha={alpha:.4f}, {width}x{height})"
    )


def render(
    lines,
    width: int,
    height: int,
    noise_sigma: float = 0.1,
    thickness: float = 1.5,
    contrast: float = 0.5,
    seed=0,
) -> np.ndarray:
    """Gaussian-noise background plus anti-aliased additive line strokes.

    Pixel centers sit at (col + 0.5, row + 0.5); coverage ramps linearly from
    1 inside the stroke to 0 one pixel outside it.  Deterministic given seed.
    """
    rng = np.random.default_rng(seed)
    img = 0.5 + noise_sigma * rng.standard_normal((height, width))
    xs = np.arange(width) + 0.5
    ys = np.arange(height) + 0.5
    X, Y = np.meshgrid(xs, ys)
    for line in lines:
        dist = np.abs(-X * math.sin(line.alpha) + Y * math.cos(line.alpha) - line.rho)
        coverage = np.clip(0.5 + (thickness / 2.0 - dist), 0.0, 1.0)
        img += contrast * coverage
    return np.clip(img, 0.0, 1.0)


def sample_seed(base_seed: int, split: str, index: int) -> int:
    """Stable 64-bit per-sample seed derived by hashing."""
    digest = hashlib.sha256(f"{base_seed}:{split}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _draw_sample(config: DatasetConfig, split: str, index: int, base_seed: int):
    seed = sample_seed(base_seed, split, index)
    rng = np.random.default_rng(seed)
    two_line = split == "test_ambiguous" or (
        split == "train" and index >= config.train_one_line
    )
    first = sample_line(
        rng, config.width, config.height, config.alpha_range, config.min_visible_frac
    )
    if two_line:
        for _ in range(1000):
            second = sample_line(
                rng,
                config.width,
                config.height,
                config.alpha_range,
                config.min_visible_frac,
            )
            if not config.separation_filter:
                break
            if (
                abs(second.alpha - first.alpha) >= config.min_sep_alpha
                or abs(second.rho - first.rho)
                >= config.min_sep_rho_frac * config.height
            ):
                break
        else:
            raise DatasetError(f"no separated pair found for {split}/{index}")
        lines = (first, second)
        unimodal = int(rng.integers(0, 2))
    else:
        lines = (first,)
        unimodal = 0
    image = render(
        lines,
        config.width,
        config.height,
        config.noise_sigma,
        config.thickness,
        config.contrast,
        seed=rng,
    )
    return SynthSample(image=image, lines=lines, unimodal_index=unimodal, seed=seed)


# ---------------------------------------------------------------------------
# disk formats: 8-bit binary PGM images, CSV manifest with a JSON header
# ---------------------------------------------------------------------------


def write_pgm(path, image: np.ndarray) -> None:
    data = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    parts = blob.split(maxsplit=4)
    if len(parts) < 5 or parts[0] != b"P5" or parts[3] != b"255":
        raise DatasetError(f"not an 8-bit binary PGM: {path}")
    w, h = int(parts[1]), int(parts[2])
    raster = parts[4][: w * h]
    if len(raster) != w * h:
        raise DatasetError(f"truncated PGM raster in {path}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w).astype(np.float64) / 255.0


def _split_plan(config: DatasetConfig):
    return (
        ("train", config.train_one_line + config.train_two_line),
        ("test_clear", config.test_clear),
        ("test_ambiguous", config.test_ambiguous),
    )


def _format_record(rec: ManifestRecord) -> str:
    a0, r0 = rec.lines[0].alpha, rec.lines[0].rho
    if len(rec.lines) == 2:
        a1, r1 = repr(rec.lines[1].alpha), repr(rec.lines[1].rho)
    else:
        a1, r1 = "", ""
    return (
        f"{rec.split},{rec.index},{rec.file},{a0!r},{r0!r},{a1},{r1},"
        f"{rec.unimodal_index},{rec.seed}"
    )


def generate_dataset(config: DatasetConfig, base_seed: int, out_dir) -> DatasetManifest:
    """Write all splits, a manifest with the config echoed, and checksums."""
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    records = []
    checksums = []
    for split, count in _split_plan(config):
        split_dir = os.path.join(out_dir, split)
        os.makedirs(split_dir, exist_ok=True)
        for index in range(count):
            sample = _draw_sample(config, split, index, base_seed)
            rel = f"{split}/{split}_{index:05d}.pgm"
            write_pgm(os.path.join(out_dir, rel), sample.image)
            with open(os.path.join(out_dir, rel), "rb") as fh:
                checksums.append((hashlib.sha256(fh.read()).hexdigest(), rel))
            records.append(
                ManifestRecord(
                    split=split,
                    index=index,
                    file=rel,
                    lines=sample.lines,
                    unimodal_index=sample.unimodal_index,
                    seed=sample.seed,
                )
            )
    header = json.dumps(
        {"config": asdict(config), "base_seed": base_seed}, sort_keys=True
    )
    with open(os.path.join(out_dir, "manifest.csv"), "w", encoding="ascii") as fh:
        fh.write(f"# {header}\n")
        fh.write(MANIFEST_COLUMNS + "\n")
        for rec in records:
            fh.write(_format_record(rec) + "\n")
    with open(os.path.join(out_dir, "checksums.sha256"), "w", encoding="ascii") as fh:
        for digest, rel in checksums:
            fh.write(f"{digest}  {rel}\n")
    return DatasetManifest(config=config, base_seed=base_seed, records=tuple(records))


def _parse_manifest(path) -> DatasetManifest:
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if len(lines) < 2 or not lines[0].startswith("# "):
        raise DatasetError(f"malformed manifest header in {path}")
    try:
        header = json.loads(lines[0][2:])
        config = DatasetConfig(**header["config"])
        base_seed = int(header["base_seed"])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DatasetError(f"malformed manifest config in {path}: {exc}") from exc
    if lines[1] != MANIFEST_COLUMNS:
        raise DatasetError(f"unexpected manifest columns in {path}")
    records = []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 9:
            raise DatasetError(f"bad manifest row at {path}:{lineno}")
        split, index, rel, a0, r0, a1, r1, uni, seed = parts
        if split not in SPLITS:
            raise DatasetError(f"unknown split {split!r} at {path}:{lineno}")
        line_params = [LineParams(float(a0), float(r0))]
        if a1:
            line_params.append(LineParams(float(a1), float(r1)))
        records.append(
            ManifestRecord(
                split=split,
                index=int(index),
                file=rel,
                lines=tuple(line_params),
                unimodal_index=int(uni),
                seed=int(seed),
            )
        )
    return DatasetManifest(config=config, base_seed=base_seed, records=tuple(records))


def load_dataset(path) -> LoadedDataset:
    """Load and verify a generated dataset directory (or its manifest path)."""
    path = os.fspath(path)
    root = path[: -len("/manifest.csv")] if path.endswith("manifest.csv") else path
    root = root or "."
    manifest_path = os.path.join(root, "manifest.csv")
    if not os.path.exists(manifest_path):
        raise DatasetError(f"manifest not found: {manifest_path}")
    manifest = _parse_manifest(manifest_path)

    expected = {}
    checksum_path = os.path.join(root, "checksums.sha256")
    if not os.path.exists(checksum_path):
        raise DatasetError(f"checksum file not found: {checksum_path}")
    with open(checksum_path, "r", encoding="ascii") as fh:
        for line in fh.read().splitlines():
            if line:
                digest, _, rel = line.partition("  ")
                expected[rel] = digest

    counts = manifest.counts()
    plan = dict(_split_plan(manifest.config))
    for split, want in plan.items():
        if counts.get(split, 0) != want:
            raise DatasetError(
                f"manifest lists {counts.get(split, 0)} {split} samples, "
                f"config promises {want}"
            )

    samples: dict[str, list[SynthSample]] = {s: [] for s in SPLITS}
    for rec in manifest.records:
        file_path = os.path.join(root, rec.file)
        if not os.path.exists(file_path):
            raise DatasetError(f"missing image file: {rec.file}")
        with open(file_path, "rb") as fh:
            digest = hashlib.sha256(fh.read()).hexdigest()
        if rec.file not in expected:
            raise ChecksumError(f"no recorded checksum for {rec.file}")
        if digest != expected[rec.file]:
            raise ChecksumError(f"checksum mismatch for {rec.file}")
        image = read_pgm(file_path)
        if image.shape != (manifest.config.height, manifest.config.width):
            raise DatasetError(f"unexpected image shape in {rec.file}")
        samples[rec.split].append(
            SynthSample(
                image=image,
                lines=rec.lines,
                unimodal_index=rec.unimodal_index,
                seed=rec.seed,
            )
        )
    return LoadedDataset(manifest=manifest, samples=samples)
