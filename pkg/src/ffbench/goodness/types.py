"""Shared value types for the goodness objectives.

The gradient contract: `grad[b]` is the derivative of sample b's
goodness with respect to that sample's own activation row. Running
statistics, attention weights, importance weights, box counts and trim
masks are treated as constants when differentiating; the finite
difference checks freeze the same quantities.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .. import tensor
from ..errors import ShapeMismatchError

__all__ = ["GoodnessResult", "GoodnessParams", "GoodnessState"]


@dataclass(frozen=True)
class GoodnessResult:
    values: np.ndarray  # B x 1 per-sample goodness
    grad: np.ndarray  # B x N, d(values[b]) / d(H[b])
    aux: dict = field(default_factory=dict)  # frozen quantities, for tests

    def __post_init__(self):
        if self.values.shape != (self.grad.shape[0], 1):
            raise ShapeMismatchError(
                f"GoodnessResult: values {self.values.shape} does not match "
                f"grad {self.grad.shape}"
            )


@dataclass(frozen=True)
class GoodnessParams:
    """Per-objective knobs; every field is surfaced in the run config."""

    delta: float = 1.0  # huber_norm quadratic/linear crossover
    temperature: float = 1.0  # tempered_energy scale
    trim_fraction: float = 0.1  # outlier_trimmed_energy top fraction dropped
    oja_alpha: float = 0.1  # oja fourth-power forgetting weight
    bcm_lambda: float = 0.1  # bcm threshold-term weight
    infonce_weight: float = 1.0  # info_nce contrast bonus weight
    pc_lambda: float = 0.1  # predictive_coding error penalty weight
    ntxent_tau: float = 0.5  # nt_xent similarity temperature
    decorr_lambda: float = 0.1  # decorrelation covariance penalty weight
    fractal_weight: float = 1.0  # fractal_dimension bonus weight
    l1_lambda: float = 0.1  # sparse_l1 penalty weight
    triplet_weight: float = 1.0  # triplet_margin separation bonus weight
    pca_k: int = 64  # number of principal components kept
    shrinkage: float = 1e-4  # variance/covariance regularizer epsilon

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        if self.ntxent_tau <= 0:
            raise ValueError(f"ntxent_tau must be > 0, got {self.ntxent_tau}")
        if self.delta <= 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        if not 0.0 < self.trim_fraction < 1.0:
            raise ValueError(
                f"trim_fraction must be in (0, 1), got {self.trim_fraction}"
            )
        if self.shrinkage <= 0:
            raise ValueError(f"shrinkage must be > 0, got {self.shrinkage}")
        if self.pca_k < 1:
            raise ValueError(f"pca_k must be >= 1, got {self.pca_k}")

    def with_overrides(self, **kwargs):
        return replace(self, **kwargs)


class GoodnessState:
    """Running statistics owned by one layer's objective.

    Exponential moving averages advance only on positive-pass training
    batches; evaluation never mutates them. The whitening matrix W and
    component basis P are refit from the covariance average between
    epochs (identity until the first refit) so the objective stays
    stationary within an epoch.
    """

    TRACKS = ("mean", "sq", "bcm", "pred", "cov", "whiten", "pca")

    def __init__(self, width, tracks=(), pca_k=None, decay=0.9):
        if not 0.0 < decay < 1.0:
            raise ValueError(f"decay must be in (0, 1), got {decay}")
        unknown = set(tracks) - set(self.TRACKS)
        if unknown:
            raise ValueError(f"unknown state tracks {sorted(unknown)}")
        self.width = int(width)
        self.tracks = tuple(tracks)
        self.decay = float(decay)
        self.running_mean = np.zeros((1, width)) if "mean" in tracks else None
        self.running_sq = np.zeros((1, width)) if "sq" in tracks else None
        self.bcm_threshold = np.zeros((1, width)) if "bcm" in tracks else None
        self.pred_baseline = np.zeros((1, width)) if "pred" in tracks else None
        needs_cov = bool({"cov", "whiten", "pca"} & set(tracks))
        self.cov_ema = np.zeros((width, width)) if needs_cov else None
        self.cov_batches = 0
        self.whitening = np.eye(width) if "whiten" in tracks else None
        if "pca" in tracks:
            k = min(int(pca_k or width), width)
            self.pca = np.eye(width)[:k].copy()
        else:
            self.pca = None

    def update_from_positive(self, h):
        """Advance every tracked average from a positive-pass batch."""
        h = tensor.as_matrix(h, "state update batch")
        if h.shape[1] != self.width:
            raise ShapeMismatchError(
                f"state update: width {h.shape[1]} != {self.width}"
            )
        d = self.decay
        if self.running_mean is not None:
            self.running_mean = d * self.running_mean + (1 - d) * h.mean(
                axis=0, keepdims=True
            )
        if self.running_sq is not None:
            self.running_sq = d * self.running_sq + (1 - d) * (h * h).mean(
                axis=0, keepdims=True
            )
        if self.bcm_threshold is not None:
            self.bcm_threshold = d * self.bcm_threshold + (1 - d) * (h * h).mean(
                axis=0, keepdims=True
            )
        if self.pred_baseline is not None:
            self.pred_baseline = d * self.pred_baseline + (1 - d) * h.mean(
                axis=0, keepdims=True
            )
        if self.cov_ema is not None and h.shape[0] >= 2:
            self.cov_ema = d * self.cov_ema + (1 - d) * tensor.batch_covariance(h)
            self.cov_batches += 1

    def running_variance(self):
        """Per-neuron variance estimate from the tracked moments."""
        if self.running_sq is None or self.running_mean is None:
            raise ValueError("variance requires 'mean' and 'sq' tracks")
        return self.running_sq - self.running_mean * self.running_mean

    def refit_projections(self, params, iters=40):
        """Refit W and/or P from the covariance average (between epochs)."""
        if self.cov_ema is None or self.cov_batches == 0:
            return
        if self.whitening is not None:
            self.whitening = tensor.inverse_sqrt_spd(
                self.cov_ema, params.shrinkage, iters=iters
            )
        if self.pca is not None:
            k = self.pca.shape[0]
            self.pca = tensor.top_k_components(
                self.cov_ema + params.shrinkage * np.eye(self.width), k, iters=100
            )

    def snapshot(self):
        """Arrays and scalars needed to restore this state exactly."""
        arrays = {}
        for name in ("running_mean", "running_sq", "bcm_threshold",
                     "pred_baseline", "cov_ema", "whitening", "pca"):
            value = getattr(self, name)
            if value is not None:
                arrays[name] = value
        meta = {
            "width": self.width,
            "tracks": list(self.tracks),
            "decay": self.decay,
            "cov_batches": self.cov_batches,
        }
        return meta, arrays

    @classmethod
    def restore(cls, meta, arrays):
        state = cls(meta["width"], tracks=tuple(meta["tracks"]), decay=meta["decay"])
        state.cov_batches = int(meta["cov_batches"])
        for name, value in arrays.items():
            # copy so restored states own writable memory
            setattr(state, name, np.array(value, dtype=np.float64, order="C"))
        return state
