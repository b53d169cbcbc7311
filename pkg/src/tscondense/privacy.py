"""Privacy diagnostics: nearest-neighbor distances and per-variable trends.

Distances are Euclidean between flattened (time x feature) matrices and
are meant to be computed in standardized space; shapes must match
exactly. Comparing condensed samples of a different temporal length to
originals is refused because there is no defined cross-length distance.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .tensor import ShapeError


def _flat(samples: np.ndarray) -> np.ndarray:
    return np.asarray(samples, dtype=np.float64).reshape(samples.shape[0], -1)


def min_distances_c2o(condensed: np.ndarray, original: np.ndarray) -> np.ndarray:
    """Per condensed sample, the distance to its nearest original."""
    if condensed.shape[1:] != original.shape[1:]:
        raise ShapeError(
            "min_distances_c2o (shapes must match; for condensed sets with a "
            "different temporal length compare in an embedding space instead)",
            condensed.shape[1:], original.shape[1:])
    return cdist(_flat(condensed), _flat(original)).min(axis=1)


def min_distances_o2o(original: np.ndarray) -> np.ndarray:
    """Per original sample, the distance to its nearest other original."""
    if original.shape[0] < 2:
        raise ValueError("need at least two samples")
    flat = _flat(original)
    out = np.empty(flat.shape[0])
    chunk = 512
    for lo in range(0, flat.shape[0], chunk):
        block = cdist(flat[lo : lo + chunk], flat)
        for row in range(block.shape[0]):
            block[row, lo + row] = np.inf  # exclude self
        out[lo : lo + block.shape[0]] = block.min(axis=1)
    return out


@dataclass
class DistanceHistogram:
    """Equal-width histogram of minimum distances plus a summary."""

    edges: np.ndarray
    counts: np.ndarray
    population: str  # "original-to-original" or "condensed-to-original"
    summary: dict

    def to_csv(self, path):
        lines = ["bin_left,bin_right,count"]
        lines += [f"{l!r},{r!r},{c}" for l, r, c in zip(self.edges[:-1], self.edges[1:], self.counts)]
        Path(path).write_text("\n".join(lines) + "\n")


def histogram(values, bins: int, population: str = "") -> DistanceHistogram:
    """Equal-width bins over [min, max]; the last bin is right-inclusive."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("histogram needs at least one value")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    counts, edges = np.histogram(values, bins=bins)
    summary = {"min": float(values.min()), "mean": float(values.mean()), "max": float(values.max())}
    return DistanceHistogram(edges, counts, population, summary)


@dataclass
class VariableTrend:
    """Across-sample mean and SD of one feature at every time step."""

    feature_index: int
    mean: np.ndarray  # (t,)
    sd: np.ndarray  # (t,)

    def to_csv(self, path):
        lines = ["time_index,mean,sd"]
        lines += [f"{i},{m!r},{s!r}" for i, (m, s) in enumerate(zip(self.mean, self.sd))]
        Path(path).write_text("\n".join(lines) + "\n")


def variable_trend(samples: np.ndarray, feature_index: int) -> VariableTrend:
    if not 0 <= feature_index < samples.shape[2]:
        raise IndexError(f"feature index {feature_index} out of range for {samples.shape[2]} features")
    column = np.asarray(samples[:, :, feature_index], dtype=np.float64)
    return VariableTrend(feature_index, column.mean(axis=0), column.std(axis=0))
