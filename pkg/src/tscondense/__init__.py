"""Condense labeled time-series datasets by distribution matching in
randomized neural embedding spaces, then evaluate utility, convergence
speed, storage size, and privacy of the condensed data."""

from .condense import (CondenseConfig, CondensedSet, condense, init_condensed, load_condensed,
                       mmd_loss, sample_class_batch, save_condensed)
from .data import (SplitSpec, Stats, TimeSeriesDataset, destandardize, gen_synthetic,
                   load_dataset, save_dataset, save_dataset_csv, size_megabytes, size_report,
                   split, standardize)
from .evaluate import (EvalReport, LearningCurve, TrainConfig, auc, bce_loss, convergence_step,
                       run_cohort, train_classifier)
from .networks import (ArchSpec, Model, NetworkCollection, build_model, catalog, mean_pool_spec,
                       resolve_spec, sample_parameters)
from .optim import SGD, Adam, AdamState, MissingGradError, ParamSet
from .privacy import (DistanceHistogram, VariableTrend, histogram, min_distances_c2o,
                      min_distances_o2o, variable_trend)
from .tensor import ShapeError, Tensor, grad_check, no_grad

__version__ = "0.1.0"
