"""Goodness objectives defined on paired positive/negative batches.

Row b of both batches comes from the same underlying image (correct vs
wrong embedded label). Each direction's gradient is taken with respect
to its own activations with the other batch held fixed, matching how
the trainer applies them.
"""

import numpy as np

from .. import tensor
from ..errors import ShapeMismatchError
from .types import GoodnessResult

__all__ = ["CONTRASTIVE_MODES", "goodness_contrastive"]

# Guard on vector norms inside cosine similarities.
COSINE_GUARD = 1e-12


def _triplet_margin(hp, hn, params):
    w = params.triplet_weight
    n = hp.shape[1]
    e_pos = tensor.row_reduce(hp * hp, "sum")
    e_neg = tensor.row_reduce(hn * hn, "sum")
    separation = (e_pos - e_neg) / n
    bonus = np.tanh(separation)
    # sech^2 of the separation, for the chain through tanh
    slope = 1.0 - bonus * bonus
    values_pos = e_pos + w * bonus
    values_neg = e_neg - w * bonus
    grad_pos = 2.0 * hp * (1.0 + w * slope / n)
    grad_neg = 2.0 * hn * (1.0 + w * slope / n)
    return (
        GoodnessResult(values_pos, grad_pos),
        GoodnessResult(values_neg, grad_neg),
    )


def _softmax_energy_margin(hp, hn, params):
    n = hp.shape[1]
    e_pos = tensor.row_reduce(hp * hp, "sum") / n
    e_neg = tensor.row_reduce(hn * hn, "sum") / n
    gap = e_pos - e_neg
    # log of the two-way softmax probability of each side
    values_pos = -tensor.softplus(-gap)
    values_neg = -tensor.softplus(gap)
    win_prob = tensor.sigmoid(gap)
    grad_pos = (1.0 - win_prob) * 2.0 * hp / n
    grad_neg = win_prob * 2.0 * hn / n
    return (
        GoodnessResult(values_pos, grad_pos),
        GoodnessResult(values_neg, grad_neg),
    )


def _unit_rows(h):
    norms = tensor.row_reduce(h, "l2norm")
    denom = norms + COSINE_GUARD
    return h / denom, norms, denom


def _cosine_grad_terms(weights, cosines, queries, keys_unit, q_norm, q_denom):
    """Sum_j weights[b,j] * d cos(q_b, k_j) / d q_b for every row b.

    d cos(q, k)/dq = k_hat / (|q|+g) - cos * q / ((|q|+g) |q|); the |q|
    factor never divides zero here because callers pass finite nonzero
    activation rows (a zero row has cos == 0 with zero weight gradient).
    """
    lead = tensor.matmul(weights, keys_unit) / q_denom
    coeff = (weights * cosines).sum(axis=1, keepdims=True)
    safe_norm = np.maximum(q_norm, COSINE_GUARD)
    return lead - coeff * queries / (q_denom * safe_norm)


def _logsumexp_rows(s):
    peak = s.max(axis=1, keepdims=True)
    return peak + np.log(np.exp(s - peak).sum(axis=1, keepdims=True))


def _info_nce_direction(queries, keys, weight, sign):
    """Energy of the queries plus a signed contrast bonus against keys.

    bonus_b = 1 - logsumexp_j cos(q_b, k_j); positive rows add it
    (sign +1, rewarded for standing apart from the key bank), negative
    rows subtract it (sign -1, pushed away from the positive bank).
    """
    q_unit, q_norm, q_denom = _unit_rows(queries)
    k_unit, _, _ = _unit_rows(keys)
    cosines = tensor.matmul(q_unit, k_unit.T)
    lse = _logsumexp_rows(cosines)
    values = tensor.row_reduce(queries * queries, "sum") + sign * weight * (1.0 - lse)
    attn = np.exp(cosines - lse)
    d_lse = _cosine_grad_terms(attn, cosines, queries, k_unit, q_norm, q_denom)
    grad = 2.0 * queries - sign * weight * d_lse
    return values, grad


def _info_nce(hp, hn, params):
    if hp.shape[0] < 2:
        raise ShapeMismatchError(
            f"info_nce: needs a batch of >= 2 pairs, got {hp.shape[0]}"
        )
    w = params.infonce_weight
    values_pos, grad_pos = _info_nce_direction(hp, hn, w, +1.0)
    values_neg, grad_neg = _info_nce_direction(hn, hp, w, -1.0)
    return (
        GoodnessResult(values_pos, grad_pos),
        GoodnessResult(values_neg, grad_neg),
    )


def _nt_xent_direction(queries, keys, tau):
    """Paired-row similarity vs all other rows, SimCLR style.

    value_b = logsumexp_{j != b} cos(q_b, k_j)/tau - cos(q_b, k_b)/tau;
    high when q_b stands apart from its own paired key.
    """
    b = queries.shape[0]
    q_unit, q_norm, q_denom = _unit_rows(queries)
    k_unit, _, _ = _unit_rows(keys)
    cosines = tensor.matmul(q_unit, k_unit.T)
    logits = cosines / tau
    off_diag = logits.copy()
    np.fill_diagonal(off_diag, -np.inf)
    lse = _logsumexp_rows(off_diag)
    values = lse - np.diag(logits).reshape(-1, 1)
    attn = np.exp(off_diag - lse)
    weights = (attn - np.eye(b)) / tau
    grad = _cosine_grad_terms(weights, cosines, queries, k_unit, q_norm, q_denom)
    return values, grad


def _nt_xent(hp, hn, params):
    if hp.shape[0] < 2:
        raise ShapeMismatchError(
            f"nt_xent: needs a batch of >= 2 pairs, got {hp.shape[0]}"
        )
    tau = params.ntxent_tau
    values_pos, grad_pos = _nt_xent_direction(hp, hn, tau)
    values_neg, grad_neg = _nt_xent_direction(hn, hp, tau)
    return (
        GoodnessResult(values_pos, grad_pos),
        GoodnessResult(-values_neg, -grad_neg),
    )


CONTRASTIVE_MODES = {
    "triplet_margin": _triplet_margin,
    "softmax_energy_margin": _softmax_energy_margin,
    "info_nce": _info_nce,
    "nt_xent": _nt_xent,
}


def goodness_contrastive(mode, h_pos, h_neg, params):
    """Both directions of a paired objective, as (positive, negative)."""
    if mode not in CONTRASTIVE_MODES:
        raise ValueError(
            f"unknown contrastive mode {mode!r}, expected one of "
            f"{sorted(CONTRASTIVE_MODES)}"
        )
    h_pos = tensor.as_matrix(h_pos, "contrastive positive activations")
    h_neg = tensor.as_matrix(h_neg, "contrastive negative activations")
    if h_pos.shape != h_neg.shape:
        raise ShapeMismatchError(
            f"contrastive goodness: positive {h_pos.shape} and negative "
            f"{h_neg.shape} batches must match"
        )
    return CONTRASTIVE_MODES[mode](h_pos, h_neg, params)
