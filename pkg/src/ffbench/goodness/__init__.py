"""Pluggable goodness registry.

Exactly 21 objectives, addressed by name, each fulfilling one contract:
given a batch activation matrix, return per-sample goodness values and
the gradient with respect to the activations. Objectives fall into four
families with different call shapes (row-local, running-state, batch
context, paired positive/negative); `registry_lookup` tells a caller
which one to use and which running statistics the objective needs.
"""

from dataclasses import dataclass

from ..errors import UnknownGoodnessError
from .. import tensor
from .types import GoodnessParams, GoodnessResult, GoodnessState
from .pointwise import goodness_pointwise, POINTWISE_MODES
from .stateful import goodness_stateful, STATEFUL_MODES
from .batchwise import goodness_batch, BATCH_MODES
from .contrastive import goodness_contrastive, CONTRASTIVE_MODES

__all__ = [
    "GoodnessDescriptor",
    "GoodnessParams",
    "GoodnessResult",
    "GoodnessState",
    "goodness_pointwise",
    "goodness_stateful",
    "goodness_batch",
    "goodness_contrastive",
    "registry_lookup",
    "registry_names",
    "make_state",
    "evaluate_goodness",
]


@dataclass(frozen=True)
class GoodnessDescriptor:
    name: str
    family: str  # pointwise | stateful | batch | contrastive
    mode: str  # key inside the family dispatch table
    state_tracks: tuple  # running statistics the objective needs
    # stateful objectives advance their own state via update_state;
    # for batch objectives with state the trainer advances it
    updates_in_call: bool
    # how the objective is scored at inference, where every sample must
    # be judged on its own row: "native" reuses the training formula,
    # "energy" falls back to the plain squared-activity energy because
    # the training formula couples samples (batch covariance) or needs
    # a paired negative batch that does not exist at inference
    eval_mode: str


def _entry(name, family, mode, tracks=(), eval_mode="native"):
    return GoodnessDescriptor(
        name=name,
        family=family,
        mode=mode,
        state_tracks=tuple(tracks),
        updates_in_call=(family == "stateful"),
        eval_mode=eval_mode,
    )


_REGISTRY = {
    d.name: d
    for d in (
        _entry("sum_of_squares", "pointwise", "sum_of_squares"),
        _entry("l2_normalized_energy", "pointwise", "l2_normalized"),
        _entry("huber_norm", "pointwise", "huber"),
        _entry("tempered_energy", "pointwise", "tempered"),
        _entry("outlier_trimmed_energy", "pointwise", "outlier_trimmed"),
        _entry("oja", "pointwise", "oja"),
        _entry("sparse_l1", "pointwise", "sparse_l1"),
        _entry("hebbian", "stateful", "hebbian", tracks=("mean",)),
        _entry("bcm", "stateful", "bcm", tracks=("bcm",)),
        _entry("predictive_coding", "stateful", "predictive_coding",
               tracks=("pred",)),
        _entry("gaussian_energy", "stateful", "gaussian_energy",
               tracks=("mean", "sq")),
        _entry("decorrelation", "batch", "decorrelation", eval_mode="energy"),
        _entry("whitened_energy", "batch", "whitened_energy",
               tracks=("cov", "whiten")),
        _entry("pca_energy", "batch", "pca_energy", tracks=("cov", "pca")),
        _entry("game_theoretic", "batch", "game_theoretic",
               tracks=("mean", "sq")),
        _entry("attention_weighted", "batch", "attention_weighted"),
        _entry("fractal_dimension", "batch", "fractal_dimension"),
        _entry("triplet_margin", "contrastive", "triplet_margin",
               eval_mode="energy"),
        _entry("softmax_energy_margin", "contrastive", "softmax_energy_margin",
               eval_mode="energy"),
        _entry("info_nce", "contrastive", "info_nce", eval_mode="energy"),
        _entry("nt_xent", "contrastive", "nt_xent", eval_mode="energy"),
    )
}

assert len(_REGISTRY) == 21


def registry_names():
    """All registered goodness names, sorted."""
    return sorted(_REGISTRY)


def registry_lookup(name):
    """Descriptor for a goodness name; unknown names list the valid ones."""
    try:
        return _REGISTRY[name]
    except KeyError:
        raise UnknownGoodnessError(
            f"unknown goodness {name!r}; valid names: {', '.join(registry_names())}"
        ) from None


def make_state(name, width, params):
    """A fresh GoodnessState sized for the objective, or None."""
    desc = registry_lookup(name)
    if not desc.state_tracks:
        return None
    return GoodnessState(width, tracks=desc.state_tracks, pca_k=params.pca_k)


def evaluate_goodness(name, h, state, params):
    """Row-local goodness values (B x 1) for inference-time scoring.

    State is read but never advanced. Objectives whose training formula
    is not row-local (see GoodnessDescriptor.eval_mode) are scored by
    plain squared-activity energy so a sample's score cannot depend on
    which other samples share its batch.
    """
    desc = registry_lookup(name)
    h = tensor.as_matrix(h, "eval activations")
    if desc.eval_mode == "energy":
        return tensor.row_reduce(h * h, "sum")
    if desc.family == "pointwise":
        return goodness_pointwise(desc.mode, h, params).values
    if desc.family == "stateful":
        return goodness_stateful(desc.mode, h, state, params,
                                 update_state=False).values
    return goodness_batch(desc.mode, h, state, params).values
