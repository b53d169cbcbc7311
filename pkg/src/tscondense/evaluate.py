"""Train classifier cohorts and report AUC, convergence, and storage cost."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from . import tensor as T
from .data import TimeSeriesDataset, size_report
from .networks import ArchSpec, Model, build_model, catalog, resolve_spec
from .optim import Adam
from .tensor import Tensor, no_grad

logger = logging.getLogger(__name__)

BCE_EPS = 1e-7


@dataclass
class TrainConfig:
    """Settings for one classifier training run."""

    steps: int = 400
    batch_size: int = 32
    learning_rate: float = 0.001
    seed: int = 0
    eval_interval: int = 5
    dtype: str = "float32"

    def validate(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.batch_size < 1 or self.eval_interval < 1:
            raise ValueError("batch size and eval interval must be >= 1")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64


@dataclass
class LearningCurve:
    """Validation trajectory recorded at fixed step intervals."""

    steps: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    val_auc: list[float] = field(default_factory=list)

    def append(self, step: int, loss: float, auc_value: float):
        if self.steps and step <= self.steps[-1]:
            raise ValueError(f"curve steps must increase, got {step} after {self.steps[-1]}")
        self.steps.append(step)
        self.train_loss.append(loss)
        self.val_auc.append(auc_value)

    def __len__(self) -> int:
        return len(self.steps)

    def to_csv(self, path):
        lines = ["step,train_loss,val_auc"]
        lines += [f"{s},{l!r},{a!r}" for s, l, a in zip(self.steps, self.train_loss, self.val_auc)]
        Path(path).write_text("\n".join(lines) + "\n")


def bce_loss(probs: Tensor, labels) -> Tensor:
    """Mean binary cross entropy on probabilities.

    Values outside (eps, 1-eps) are clamped (gradient blocked there) and
    the occurrence is logged.
    """
    out_of_range = int(((probs.data <= BCE_EPS) | (probs.data >= 1.0 - BCE_EPS)).sum())
    if out_of_range:
        logger.debug("bce_loss clamped %d probabilities to [%g, %g]", out_of_range, BCE_EPS, 1.0 - BCE_EPS)
    p = T.clip(probs, BCE_EPS, 1.0 - BCE_EPS)
    y = Tensor(np.asarray(labels, dtype=probs.dtype))
    loss = -(y * T.log(p) + (1.0 - y) * T.log(1.0 - p))
    return loss.mean()


def auc(scores, labels) -> float:
    """Probability that a positive outscores a negative; ties count half.

    Computed from the rank statistic, so it is exact and invariant under
    strictly increasing transforms of the scores.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auc needs both classes present")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _check_same_stats(train: TimeSeriesDataset, val: TimeSeriesDataset):
    if train.stats is None or val.stats is None:
        raise ValueError("train and validation sets must be standardized")
    if train.stats.source != val.stats.source or not np.allclose(train.stats.mean, val.stats.mean):
        raise ValueError("train and validation sets carry different standardization stats")


def _scores(model: Model, dataset: TimeSeriesDataset, dtype, chunk: int = 512) -> np.ndarray:
    out = np.empty(dataset.n, dtype=np.float64)
    with no_grad():
        for lo in range(0, dataset.n, chunk):
            batch = Tensor(dataset.samples[lo : lo + chunk].astype(dtype, copy=False))
            out[lo : lo + batch.shape[0]] = model.predict(batch).data
    return out


def train_classifier(spec: ArchSpec | str, train: TimeSeriesDataset, val: TimeSeriesDataset,
                     config: TrainConfig) -> tuple[Model, LearningCurve]:
    """Adam + BCE training; returns the best-validation-AUC snapshot.

    Validation AUC is recorded every ``eval_interval`` steps and at the
    final step; the parameter snapshot with the highest validation AUC
    (earliest on ties) is loaded back into the returned model.
    """
    config.validate()
    _check_same_stats(train, val)
    if isinstance(spec, str):
        spec = resolve_spec(spec, train.f)
    dtype = config.np_dtype
    model = build_model(spec, config.seed, dtype)
    curve = LearningCurve()
    if config.steps == 0:
        return model, curve

    optimizer = Adam(model.params, learning_rate=config.learning_rate)
    rng = np.random.default_rng([config.seed, 1])
    batch = min(config.batch_size, train.n)
    order = rng.permutation(train.n)
    cursor = 0
    best_auc, best_values = -1.0, None
    for step in range(1, config.steps + 1):
        if cursor + batch > train.n:
            order = rng.permutation(train.n)
            cursor = 0
        idx = order[cursor : cursor + batch]
        cursor += batch
        x = Tensor(train.samples[idx].astype(dtype, copy=False))
        probs = model.predict(x)
        loss = bce_loss(probs, train.labels[idx])
        value = float(loss.data)
        if not np.isfinite(value):
            raise RuntimeError(f"non-finite training loss at step {step} ({spec.name})")
        model.params.zero_grads()
        loss.backward()
        optimizer.step()
        if step % config.eval_interval == 0 or step == config.steps:
            val_auc = auc(_scores(model, val, dtype), val.labels)
            curve.append(step, value, val_auc)
            if val_auc > best_auc:
                best_auc = val_auc
                best_values = model.params.copy_values()
    model.params.load_values(best_values)
    return model, curve


def convergence_step(curve: LearningCurve, window: int = 5, tolerance: float = 0.005) -> int:
    """First recorded step whose smoothed validation AUC is within
    ``tolerance`` of the best smoothed AUC anywhere on the curve.

    Smoothing is a trailing moving average over up to ``window`` records.
    """
    if len(curve) == 0:
        raise ValueError("convergence_step needs a non-empty curve")
    values = np.asarray(curve.val_auc, dtype=np.float64)
    smoothed = np.array([values[max(0, i - window + 1) : i + 1].mean() for i in range(len(values))])
    target = smoothed.max() - tolerance
    for step, s in zip(curve.steps, smoothed):
        if s >= target:
            return step
    return curve.steps[-1]


@dataclass
class EvalReport:
    """Cohort results: per-architecture AUCs plus labeled aggregates.

    Three spreads are reported because "SD" is ambiguous for an
    (architecture x repeat) grid: the spread of per-architecture mean
    AUCs, the spread over all individual runs, and the mean of the
    per-architecture SDs over repeats. All use population SD so a single
    repeat reports 0.
    """

    per_arch: dict[str, dict]
    cohort_auc_mean: float
    sd_over_arch_means: float
    sd_over_all_runs: float
    mean_of_arch_sds: float
    train_size_mb: dict[str, float]
    n_train: int
    metadata: dict

    def to_dict(self) -> dict:
        return {
            "per_arch": self.per_arch,
            "cohort_auc_mean": self.cohort_auc_mean,
            "sd_over_arch_means": self.sd_over_arch_means,
            "sd_over_all_runs": self.sd_over_all_runs,
            "mean_of_arch_sds": self.mean_of_arch_sds,
            "train_size_mb": self.train_size_mb,
            "n_train": self.n_train,
            "metadata": self.metadata,
        }

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(**{k: d[k] for k in ("per_arch", "cohort_auc_mean", "sd_over_arch_means",
                                        "sd_over_all_runs", "mean_of_arch_sds", "train_size_mb",
                                        "n_train", "metadata")})

    @classmethod
    def load(cls, path) -> "EvalReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _trial_seed(master_seed: int, arch_index: int, repeat: int) -> int:
    return int(np.random.SeedSequence([master_seed, arch_index, repeat]).generate_state(1)[0])


def _run_trial(payload):
    spec, train, val, test, config, window, tolerance = payload
    model, curve = train_classifier(spec, train, val, config)
    test_auc = auc(_scores(model, test, config.np_dtype), test.labels)
    return test_auc, convergence_step(curve, window, tolerance), curve


def run_cohort(train: TimeSeriesDataset, val: TimeSeriesDataset, test: TimeSeriesDataset,
               archs=None, repeats: int = 5, config: TrainConfig | None = None,
               master_seed: int = 0, workers: int = 1,
               convergence_window: int = 5, convergence_tolerance: float = 0.005,
               ) -> tuple[EvalReport, dict]:
    """Train (architecture x repeat) trials and aggregate their test AUCs.

    Trial seeds are derived from (master seed, architecture index,
    repeat index), so results do not depend on scheduling and a master
    seed reproduces the full report. Returns the report and the learning
    curves keyed by (arch name, repeat).
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if config is None:
        config = TrainConfig()
    if archs is None:
        archs = list(catalog(train.f))
    specs = [a if isinstance(a, ArchSpec) else resolve_spec(a, train.f) for a in archs]

    payloads = []
    for i, spec in enumerate(specs):
        for r in range(repeats):
            cfg = replace(config, seed=_trial_seed(master_seed, i, r))
            payloads.append((spec, train, val, test, cfg, convergence_window, convergence_tolerance))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_trial, payloads))
    else:
        outcomes = [_run_trial(p) for p in payloads]

    per_arch, curves = {}, {}
    arch_means, arch_sds, all_runs = [], [], []
    for i, spec in enumerate(specs):
        rows = outcomes[i * repeats : (i + 1) * repeats]
        aucs = [r[0] for r in rows]
        steps = [r[1] for r in rows]
        for r, row in enumerate(rows):
            curves[(spec.name, r)] = row[2]
        per_arch[spec.name] = {
            "auc_mean": float(np.mean(aucs)),
            "auc_sd": float(np.std(aucs)),
            "aucs": aucs,
            "convergence_steps": steps,
            "convergence_step_mean": float(np.mean(steps)),
        }
        arch_means.append(np.mean(aucs))
        arch_sds.append(np.std(aucs))
        all_runs.extend(aucs)

    report = EvalReport(
        per_arch=per_arch,
        cohort_auc_mean=float(np.mean(arch_means)),
        sd_over_arch_means=float(np.std(arch_means)),
        sd_over_all_runs=float(np.std(all_runs)),
        mean_of_arch_sds=float(np.mean(arch_sds)),
        train_size_mb=size_report(train),
        n_train=train.n,
        metadata={
            "master_seed": master_seed,
            "repeats": repeats,
            "architectures": [s.name for s in specs],
            "train_config": {"steps": config.steps, "batch_size": config.batch_size,
                             "learning_rate": config.learning_rate,
                             "eval_interval": config.eval_interval, "dtype": config.dtype},
            "convergence_rule": {"window": convergence_window, "tolerance": convergence_tolerance},
            "train_fingerprint": train.fingerprint(),
        })
    return report, curves
