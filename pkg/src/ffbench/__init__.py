"""Layer-local forward-forward training with pluggable goodness
objectives, deterministic compute metering, and a benchmark CLI."""

from .engine import (
    FFConfig,
    LayerState,
    RunMetrics,
    ff_layer_loss,
    layer_forward,
    linear_probe,
    multipass_predict,
    multipass_scores,
    train_network,
)
from .goodness import (
    GoodnessParams,
    GoodnessResult,
    GoodnessState,
    evaluate_goodness,
    registry_lookup,
    registry_names,
)
from .metering import CostMeter, PowerModel, estimate_footprint
from .tensor import Rng, matmul

__version__ = "0.1.0"

__all__ = [
    "FFConfig",
    "LayerState",
    "RunMetrics",
    "ff_layer_loss",
    "layer_forward",
    "linear_probe",
    "multipass_predict",
    "multipass_scores",
    "train_network",
    "GoodnessParams",
    "GoodnessResult",
    "GoodnessState",
    "evaluate_goodness",
    "registry_lookup",
    "registry_names",
    "CostMeter",
    "PowerModel",
    "estimate_footprint",
    "Rng",
    "matmul",
    "__version__",
]
