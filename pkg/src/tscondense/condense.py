"""Learning a condensed dataset by matching batch-mean embeddings.

Each iteration samples one architecture from the collection, a fresh
random draw of its parameters, and per-class batches of original and
condensed samples. The loss is the sum over classes of the squared
distance between the two batch-mean embeddings; only the condensed
samples receive gradients. The trained network is discarded after every
iteration, so no parameters ever persist.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .data import Stats, TimeSeriesDataset, size_report
from .networks import DEFAULT_COLLECTION, NetworkCollection, build_model
from .optim import SGD, Adam, ParamSet
from .tensor import Tensor, no_grad


class NonFiniteLossError(RuntimeError):
    def __init__(self, iteration: int, network: str, value: float):
        self.iteration = iteration
        self.network = network
        super().__init__(f"non-finite loss {value} at iteration {iteration} (network {network})")


@dataclass
class CondenseConfig:
    """Knobs of the condensation loop."""

    n_condensed: int
    temporal_dim: int | None = None  # None: keep the source temporal length
    iterations: int = 24000
    batch_size: int = 256
    optimizer: str = "adam"  # "adam" or "sgd"
    learning_rate: float = 0.001
    networks: tuple[str, ...] = DEFAULT_COLLECTION
    seed: int = 0
    dtype: str = "float32"

    def validate(self):
        if self.n_condensed < 2 or self.n_condensed % 2:
            raise ValueError(f"condensed size must be even and >= 2, got {self.n_condensed}")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype!r}")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64


@dataclass
class CondensedSet:
    """Learned synthetic samples with fixed, balanced class labels.

    Samples live in the standardized feature space of the source train
    set; ``stats`` carries what is needed to de-standardize them for
    inspection. Labels are immutable; only samples are ever learned.
    """

    samples: np.ndarray  # (|C|, t*, f)
    labels: np.ndarray  # (|C|,)
    stats: Stats | None = None
    provenance: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    def as_dataset(self) -> TimeSeriesDataset:
        return TimeSeriesDataset(self.samples.copy(), self.labels.copy(),
                                 stats=self.stats, origin="condensed")


def init_condensed(config: CondenseConfig, t: int, f: int,
                   rng: np.random.Generator | None = None,
                   stats: Stats | None = None) -> CondensedSet:
    """Fresh condensed set: i.i.d. standard-normal samples, labels 0,1,0,1,...

    Balance is exact, which is why odd sizes are rejected.
    """
    config.validate()
    if rng is None:
        rng = np.random.default_rng(config.seed)
    t_star = config.temporal_dim or t
    samples = rng.standard_normal((config.n_condensed, t_star, f)).astype(config.np_dtype)
    labels = (np.arange(config.n_condensed) % 2).astype(np.int64)
    return CondensedSet(samples, labels, stats=stats,
                        provenance={"seed": config.seed, "iterations": 0,
                                    "networks": list(config.networks)})


def sample_class_batch(dataset: TimeSeriesDataset, label: int, size: int,
                       rng: np.random.Generator) -> np.ndarray:
    """Uniform without-replacement batch from one class.

    A class smaller than ``size`` is returned whole, in stored order.
    """
    pool = dataset.class_indices(label)
    if pool.size == 0:
        raise ValueError(f"dataset has no samples of class {label}")
    return dataset.samples[_draw_indices(pool, size, rng)]


def _draw_indices(pool: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    if size >= pool.size:
        return pool
    return rng.choice(pool, size=size, replace=False)


def mmd_loss(orig_batches: dict, cond_batches: dict, model) -> Tensor:
    """Sum over classes of ||mean embed(originals) - mean embed(condensed)||^2.

    Original batches are embedded off the tape, so gradients flow only
    into the condensed side.
    """
    if set(orig_batches) != set(cond_batches):
        raise ValueError(f"class sets differ: originals {sorted(orig_batches)} "
                         f"vs condensed {sorted(cond_batches)}")
    loss = None
    for label in sorted(orig_batches):
        ob, cb = orig_batches[label], cond_batches[label]
        ob = ob if isinstance(ob, Tensor) else Tensor(ob)
        if ob.shape[0] == 0 or cb.shape[0] == 0:
            raise ValueError(f"empty batch for class {label}")
        with no_grad():
            orig_mean = model.embed(ob.detach()).mean(axis=0)
        cond_mean = model.embed(cb).mean(axis=0)
        diff = cond_mean - orig_mean
        term = (diff * diff).sum()
        loss = term if loss is None else loss + term
    return loss


def condense(dataset: TimeSeriesDataset, config: CondenseConfig) -> tuple[CondensedSet, list[float]]:
    """Run the condensation loop; deterministic given the config seed.

    Returns the condensed set and the per-iteration loss trace. The
    source dataset must be standardized and contain both classes.
    """
    config.validate()
    if dataset.stats is None:
        raise ValueError("condense requires a standardized dataset (see standardize/split)")
    classes = [0, 1]
    for label in classes:
        if dataset.class_indices(label).size == 0:
            raise ValueError(f"source dataset has no samples of class {label}")
    if config.n_condensed > dataset.n // 4:
        raise ValueError(f"condensed size {config.n_condensed} exceeds n/4 = {dataset.n // 4}")
    collection = NetworkCollection.from_names(config.networks, dataset.f)
    t_star = config.temporal_dim or dataset.t
    if t_star < collection.max_kernel_size:
        raise ValueError(f"temporal dim {t_star} below the largest kernel {collection.max_kernel_size}")

    master = np.random.default_rng(config.seed)
    cond = init_condensed(config, dataset.t, dataset.f, rng=master, stats=dataset.stats)
    learnable = Tensor(cond.samples, requires_grad=True)
    params = ParamSet({"condensed": learnable})
    if config.optimizer == "adam":
        opt = Adam(params, learning_rate=config.learning_rate)
    else:
        opt = SGD(params, learning_rate=config.learning_rate)

    orig_pools = {s: dataset.class_indices(s) for s in classes}
    cond_pools = {s: np.flatnonzero(cond.labels == s) for s in classes}
    dtype = config.np_dtype
    trace: list[float] = []
    started = time.perf_counter()
    for it in range(config.iterations):
        spec = collection.specs[int(master.integers(len(collection.specs)))]
        model = build_model(spec, int(master.integers(2**63)), dtype)
        orig_batches, cond_batches = {}, {}
        for s in classes:
            oi = _draw_indices(orig_pools[s], config.batch_size, master)
            orig_batches[s] = dataset.samples[oi].astype(dtype, copy=False)
            ci = _draw_indices(cond_pools[s], config.batch_size, master)
            cond_batches[s] = T.take(learnable, ci)
        loss = mmd_loss(orig_batches, cond_batches, model)
        value = float(loss.data)
        if not np.isfinite(value):
            raise NonFiniteLossError(it, spec.name, value)
        params.zero_grads()
        loss.backward()
        opt.step()
        trace.append(value)
    wall = time.perf_counter() - started

    result = CondensedSet(
        learnable.data.astype(np.float32), cond.labels, stats=dataset.stats,
        provenance={
            "seed": config.seed,
            "iterations": config.iterations,
            "networks": list(config.networks),
            "source_fingerprint": dataset.fingerprint(),
            "wall_clock_seconds": wall,
            "optimizer": config.optimizer,
            "learning_rate": config.learning_rate,
            "batch_size": config.batch_size,
            "temporal_dim": t_star,
            "size_megabytes": size_report((config.n_condensed, t_star, dataset.f)),
        })
    return result, trace


# -- serialization ---------------------------------------------------------------


def save_condensed(cond: CondensedSet, out_dir) -> Path:
    """Write meta.json plus raw little-endian float32 samples.

    Wall-clock time is volatile and is serialized as null so repeated
    runs with one seed produce identical bytes; the in-memory provenance
    keeps the measured value.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    provenance = dict(cond.provenance)
    if "wall_clock_seconds" in provenance:
        provenance["wall_clock_seconds"] = None
    meta = {
        "shape": list(cond.samples.shape),
        "labels": cond.labels.tolist(),
        "provenance": provenance,
        "stats": cond.stats.to_dict() if cond.stats else None,
        "element_width": 32,
        "byte_order": "little",
        "layout": "sample-major",
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    (out / "data.bin").write_bytes(np.ascontiguousarray(cond.samples, dtype="<f4").tobytes())
    return out


def load_condensed(path) -> CondensedSet:
    root = Path(path)
    meta = json.loads((root / "meta.json").read_text())
    shape = tuple(meta["shape"])
    raw = (root / "data.bin").read_bytes()
    expected = int(np.prod(shape)) * 4
    if len(raw) != expected:
        raise ValueError(f"meta declares shape {shape} ({expected} bytes) "
                         f"but data.bin holds {len(raw)} bytes")
    samples = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    stats = Stats.from_dict(meta["stats"]) if meta.get("stats") else None
    return CondensedSet(samples, np.asarray(meta["labels"], dtype=np.int64), stats, meta["provenance"])


def write_loss_trace(path, trace: list[float]):
    lines = ["iteration,loss"] + [f"{i},{value!r}" for i, value in enumerate(trace)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_loss_trace(path) -> list[float]:
    rows = Path(path).read_text().strip().split("\n")[1:]
    return [float(r.split(",")[1]) for r in rows]
