from .optim import Adam, lr_at_epoch
from .evaluate import (
    MetricsReport, Perturbation, PROBE_SETUPS, TABLE_SETUPS, aggregate_metrics,
    evaluate,
)
from .loop import (
    DivergenceError, TrainConfig, TrainResult, build_dual_view_items,
    subsampled_train_items, train,
)
from .protocols import PerturbationRow, fraction_sweep, perturbation_report

__all__ = [
    "Adam", "lr_at_epoch", "MetricsReport", "Perturbation", "PROBE_SETUPS", "aggregate_metrics",
    "TABLE_SETUPS", "evaluate", "DivergenceError", "TrainConfig", "TrainResult",
    "build_dual_view_items", "subsampled_train_items", "train",
    "PerturbationRow", "fraction_sweep", "perturbation_report",
]
