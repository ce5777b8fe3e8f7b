"""granlab: fine- versus coarse-grained supervised training, desk scale.

Small dense networks with softmax or sigmoid heads, the exact
cross-entropy decomposition fine = coarse + intra, a concentric-circles
generator with controllable boundary redundancy, ingestion for the
standard image benchmarks, and a sweep harness with CSV/JSON persistence.
"""

from .circles import CircleSpec, circle_hierarchy, generate_circles, redundancy_of
from .dataset import LabeledDataset, load_dataset, one_hot, save_dataset, subsample
from .exceptions import ConfigError, DataError, DivergenceError, GranlabError, ParseError
from .gradients import Gradients, backward
from .harness import (
    ExperimentSpec,
    PointConfig,
    RunRecord,
    SweepResult,
    aggregate,
    batch_size_for,
    coarse_accuracy,
    load_archive,
    persist,
    run_comparison,
    sweep,
)
from .losses import (
    COARSE,
    FINE,
    INTRA,
    DecompositionReport,
    Hierarchy,
    LossKind,
    aggregate_fine_to_coarse,
    hybrid,
    loss_coarse,
    loss_fine,
    loss_hybrid,
    loss_intra,
    verify_decomposition,
)
from .model import (
    ForwardTrace,
    MlpModel,
    forward,
    glorot_init,
    match_capacity,
    parameter_count,
    predict_probs,
)
from .realdata import (
    GROUPING_PRESETS,
    GroupingSpec,
    apply_grouping,
    load_grouped,
    normalize,
    parse_cifar10,
    parse_idx,
    write_cifar10,
    write_idx,
)
from .training import TrainConfig, TrainingLog, train

__version__ = "0.1.0"
