"""Dataset container, file formats, standardization, splits, synthetic data.

On disk a dataset is a directory holding either the binary format
(``meta.json`` plus a raw little-endian float matrix ``data.bin`` laid
out row-major as [sample][time][feature]) or the CSV variant
(``data.csv`` with one row per (sample, time) pair and ``labels.csv``).
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataFormatError(ValueError):
    """A dataset on disk violates the declared format."""


@dataclass(frozen=True)
class Stats:
    """Per-feature standardization statistics and their provenance."""

    mean: np.ndarray
    std: np.ndarray
    source: str
    constant_features: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "source": self.source,
            "constant_features": list(self.constant_features),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Stats":
        return cls(np.asarray(d["mean"], dtype=np.float64),
                   np.asarray(d["std"], dtype=np.float64),
                   d["source"], tuple(d.get("constant_features", ())))


@dataclass
class TimeSeriesDataset:
    """N labeled samples, each a (time x feature) matrix.

    ``stats`` is present exactly when the samples are in standardized
    space; it always records which dataset produced it.
    """

    samples: np.ndarray  # (n, t, f)
    labels: np.ndarray  # (n,), values in {0, 1}
    feature_names: list[str] = field(default_factory=list)
    stats: Stats | None = None
    origin: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.samples.ndim != 3 or self.samples.shape[0] < 1:
            raise DataFormatError(f"samples must be (n, t, f) with n >= 1, got {self.samples.shape}")
        if self.labels.shape != (self.samples.shape[0],):
            raise DataFormatError(
                f"labels shape {self.labels.shape} does not match {self.samples.shape[0]} samples")
        bad = np.flatnonzero((self.labels != 0) & (self.labels != 1))
        if bad.size:
            raise DataFormatError(f"record {int(bad[0])} has label {int(self.labels[bad[0]])}, expected 0 or 1")
        if not self.feature_names:
            self.feature_names = [f"feature_{i}" for i in range(self.f)]
        if len(self.feature_names) != self.f:
            raise DataFormatError(f"{len(self.feature_names)} feature names for {self.f} features")

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def t(self) -> int:
        return self.samples.shape[1]

    @property
    def f(self) -> int:
        return self.samples.shape[2]

    def class_indices(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.labels == label)

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        digest.update(str(self.samples.shape).encode())
        digest.update(np.ascontiguousarray(self.samples).tobytes())
        digest.update(self.labels.tobytes())
        return digest.hexdigest()[:16]


@dataclass(frozen=True)
class SplitSpec:
    """Train/validation/test partition, as fractions or absolute counts."""

    fractions: tuple[float, float, float] | None = (0.64, 0.16, 0.20)
    counts: tuple[int, int, int] | None = None
    seed: int = 0

    def resolve(self, n: int) -> tuple[int, int, int]:
        if self.counts is not None:
            if any(c < 0 for c in self.counts) or sum(self.counts) != n:
                raise ValueError(f"split counts {self.counts} do not partition {n} samples")
            return self.counts
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ValueError(f"split fractions {self.fractions} must sum to 1")
        n_train = int(np.floor(self.fractions[0] * n))
        n_val = int(np.floor(self.fractions[1] * n))
        return n_train, n_val, n - n_train - n_val


def standardize(dataset: TimeSeriesDataset, stats: Stats | None = None) -> tuple[TimeSeriesDataset, Stats]:
    """Shift/scale each feature to mean 0, std 1 over all (sample, time) values.

    When ``stats`` is given (validation/test case) it is applied as-is and
    never recomputed. Zero-variance features pass through unchanged (std
    treated as 1) and are recorded with a warning.
    """
    if dataset.stats is not None:
        raise ValueError("dataset is already standardized")
    if stats is None:
        values = dataset.samples.reshape(-1, dataset.f).astype(np.float64)
        mean = values.mean(axis=0)
        std = values.std(axis=0)
        constant = tuple(int(i) for i in np.flatnonzero(std == 0))
        if constant:
            warnings.warn(f"features {constant} are constant; passing them through unscaled")
            std = std.copy()
            std[list(constant)] = 1.0
        stats = Stats(mean, std, source=dataset.fingerprint(), constant_features=constant)
    scaled = (dataset.samples - stats.mean) / stats.std
    out = TimeSeriesDataset(scaled.astype(dataset.samples.dtype), dataset.labels.copy(),
                            list(dataset.feature_names), stats, dataset.origin)
    return out, stats


def destandardize(dataset: TimeSeriesDataset) -> TimeSeriesDataset:
    if dataset.stats is None:
        raise ValueError("dataset carries no standardization stats")
    raw = dataset.samples * dataset.stats.std + dataset.stats.mean
    return TimeSeriesDataset(raw.astype(dataset.samples.dtype), dataset.labels.copy(),
                             list(dataset.feature_names), None, dataset.origin)


def split(dataset: TimeSeriesDataset, spec: SplitSpec,
          apply_standardization: bool = True):
    """Disjoint, exhaustive, uniform-random train/validation/test partition.

    Standardization stats come from the train part only and are applied
    to all three parts.
    """
    n_train, n_val, n_test = spec.resolve(dataset.n)
    rng = np.random.default_rng(spec.seed)
    perm = rng.permutation(dataset.n)
    pieces = []
    offset = 0
    for count, tag in ((n_train, "train"), (n_val, "validation"), (n_test, "test")):
        idx = np.sort(perm[offset : offset + count])
        offset += count
        pieces.append(TimeSeriesDataset(dataset.samples[idx].copy(), dataset.labels[idx].copy(),
                                        list(dataset.feature_names), None,
                                        origin=f"{dataset.origin}/{tag}" if dataset.origin else tag))
    if not apply_standardization:
        return tuple(pieces)
    train, stats = standardize(pieces[0])
    val, _ = standardize(pieces[1], stats)
    test, _ = standardize(pieces[2], stats)
    return train, val, test


def gen_synthetic(n: int, t: int, f: int, delta: float, sigma: float,
                  seed: int = 0, dtype=np.float64) -> TimeSeriesDataset:
    """Two-class synthetic set: smooth per-sample trends plus noise.

    Class 0 samples are sinusoidal trends with Gaussian noise; class 1
    adds a fixed class-specific offset pattern: one oscillation per
    feature with a seed-determined amplitude, frequency and phase,
    normalized so the class-mean separation (Euclidean across features,
    RMS over time) equals ``delta``. The pattern has near-zero time
    average, so separating the classes takes temporal features rather
    than a plain mean shift. With delta=0 the classes are identical in
    distribution. Labels alternate, so balance is exact for even n.
    """
    if delta < 0 or sigma < 0:
        raise ValueError("delta and sigma must be non-negative")
    rng = np.random.default_rng(seed)
    grid = np.arange(t, dtype=np.float64) / t
    weight = rng.standard_normal(f)
    sig_freq = rng.uniform(1.0, 3.0, size=f)
    sig_phase = rng.uniform(0.0, 2.0 * np.pi, size=f)
    signature = weight * np.sin(2.0 * np.pi * sig_freq * grid[:, None] + sig_phase)  # (t, f)
    norm = np.sqrt((signature**2).sum(axis=1).mean())
    signature *= delta / norm
    labels = np.arange(n) % 2
    amp = rng.uniform(0.5, 1.5, size=(n, f))
    freq = rng.uniform(0.5, 2.0, size=(n, f))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=(n, f))
    trend = amp[:, None, :] * np.sin(2.0 * np.pi * freq[:, None, :] * grid[None, :, None] + phase[:, None, :])
    noise = sigma * rng.standard_normal((n, t, f))
    samples = trend + noise + (labels == 1)[:, None, None] * signature[None, :, :]
    return TimeSeriesDataset(samples.astype(dtype), labels,
                             origin=f"synthetic(n={n},t={t},f={f},delta={delta},sigma={sigma},seed={seed})")


# -- size accounting -------------------------------------------------------------


def size_megabytes(obj, element_width: int | None = None) -> float:
    """Matrix payload size in MB (2**20 bytes); labels/metadata excluded."""
    if hasattr(obj, "samples"):
        shape = obj.samples.shape
        if element_width is None:
            element_width = obj.samples.dtype.itemsize * 8
    else:
        shape = tuple(obj)
        if element_width is None:
            raise ValueError("element_width required when passing a bare shape")
    if element_width not in (32, 64):
        raise ValueError(f"element width must be 32 or 64 bits, got {element_width}")
    return float(np.prod(shape, dtype=np.int64)) * (element_width // 8) / 2**20


def size_report(obj) -> dict[str, float]:
    """Both storage-width readings of the same matrix payload."""
    shape = obj.samples.shape if hasattr(obj, "samples") else tuple(obj)
    return {
        "float32_mb": round(size_megabytes(shape, 32), 4),
        "float64_mb": round(size_megabytes(shape, 64), 4),
    }


# -- on-disk formats ---------------------------------------------------------------


def _dtype_for_width(width: int):
    if width == 32:
        return np.dtype("<f4")
    if width == 64:
        return np.dtype("<f8")
    raise DataFormatError(f"unsupported element width {width}")


def save_dataset(dataset: TimeSeriesDataset, out_dir, element_width: int | None = None) -> Path:
    """Write the binary format; returns the directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if element_width is None:
        element_width = dataset.samples.dtype.itemsize * 8
    dt = _dtype_for_width(element_width)
    meta = {
        "n": dataset.n,
        "t": dataset.t,
        "f": dataset.f,
        "labels": dataset.labels.tolist(),
        "feature_names": dataset.feature_names,
        "standardized": dataset.stats is not None,
        "stats": dataset.stats.to_dict() if dataset.stats else None,
        "element_width": element_width,
        "byte_order": "little",
        "layout": "sample-major",
        "origin": dataset.origin,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    (out / "data.bin").write_bytes(np.ascontiguousarray(dataset.samples, dtype=dt).tobytes())
    return out


def save_dataset_csv(dataset: TimeSeriesDataset, out_dir) -> Path:
    """Write the CSV variant (values at full round-trip precision)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fmt = "%.17g" if dataset.samples.dtype == np.float64 else "%.9g"
    header = "sample_id,time_index," + ",".join(f"feature_{i}" for i in range(dataset.f))
    rows = [header]
    for i in range(dataset.n):
        for ti in range(dataset.t):
            vals = ",".join(fmt % v for v in dataset.samples[i, ti])
            rows.append(f"{i},{ti},{vals}")
    (out / "data.csv").write_text("\n".join(rows) + "\n")
    lab = ["sample_id,label"] + [f"{i},{int(y)}" for i, y in enumerate(dataset.labels)]
    (out / "labels.csv").write_text("\n".join(lab) + "\n")
    return out


def load_dataset(path) -> TimeSeriesDataset:
    """Read either on-disk format back into memory, validating shapes."""
    root = Path(path)
    if (root / "meta.json").exists():
        return _load_binary(root)
    if (root / "data.csv").exists():
        return _load_csv(root)
    raise FileNotFoundError(f"no dataset found at {root} (expected meta.json or data.csv)")


def _load_binary(root: Path) -> TimeSeriesDataset:
    meta = json.loads((root / "meta.json").read_text())
    n, t, f = meta["n"], meta["t"], meta["f"]
    dt = _dtype_for_width(meta["element_width"])
    raw = (root / "data.bin").read_bytes()
    expected = n * t * f * dt.itemsize
    if len(raw) != expected:
        raise DataFormatError(
            f"meta declares {n}x{t}x{f} at {meta['element_width']} bits "
            f"({expected} bytes) but data.bin holds {len(raw)} bytes")
    samples = np.frombuffer(raw, dtype=dt).reshape(n, t, f).copy()
    stats = Stats.from_dict(meta["stats"]) if meta.get("stats") else None
    return TimeSeriesDataset(samples, np.asarray(meta["labels"]), list(meta["feature_names"]),
                             stats, meta.get("origin", str(root)))


def _load_csv(root: Path) -> TimeSeriesDataset:
    data_rows = (root / "data.csv").read_text().strip().split("\n")
    header = data_rows[0].split(",")
    if header[:2] != ["sample_id", "time_index"]:
        raise DataFormatError(f"unexpected data.csv header {header[:2]}")
    f = len(header) - 2
    cells = np.array([row.split(",") for row in data_rows[1:]], dtype=object)
    sample_ids = cells[:, 0].astype(int)
    values = cells[:, 2:].astype(np.float64)
    n = int(sample_ids.max()) + 1
    if len(data_rows) - 1 == 0 or (len(data_rows) - 1) % n:
        raise DataFormatError(f"data.csv rows ({len(data_rows) - 1}) not divisible into {n} samples")
    t = (len(data_rows) - 1) // n
    samples = np.zeros((n, t, f))
    for row, sid in enumerate(sample_ids):
        samples[sid, int(cells[row, 1])] = values[row]
    lab_rows = (root / "labels.csv").read_text().strip().split("\n")[1:]
    labels = np.zeros(n, dtype=np.int64)
    for row in lab_rows:
        sid, lab = row.split(",")
        labels[int(sid)] = int(lab)
    return TimeSeriesDataset(samples, labels, [name for name in header[2:]], None, str(root))
