"""Layer-local training engine.

Each dense layer learns from two forward passes per batch: a positive
pass on correctly labeled inputs and a negative pass on wrongly labeled
ones. The layer's scalar goodness G(h) is pushed above a threshold on
the positive pass and below it on the negative pass:

    loss = mean_b[ softplus(-(G_pos_b - theta)) + softplus(G_neg_b - theta) ]

Gradients stop at the layer boundary: a layer differentiates only its
own pre-activations, treating its input as a constant, so no gradient
ever crosses between layers. All layers train simultaneously within one
batch step, each consuming the previous layer's activations as computed
BEFORE that layer's weight update.

Two details copied from the source training procedure:
* full-gradient relu: forward is max(z, 0) but the backward mask is 1
  everywhere, including negative pre-activations;
* length normalization: inputs to every layer after the first are
  divided row-wise by their L2 norm (+ 1e-8), so a deeper layer cannot
  read the previous layer's goodness from raw magnitude.

A peer-normalization penalty (added to the positive pass) keeps
per-neuron mean activity balanced across a layer.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor
from .data import embed_label, embed_neutral, make_negative
from .errors import FFBenchError, ShapeMismatchError, TrainingDivergedError
from .goodness import (
    GoodnessParams,
    evaluate_goodness,
    goodness_batch,
    goodness_contrastive,
    goodness_pointwise,
    goodness_stateful,
    make_state,
    registry_lookup,
)
from .metering import CostMeter
from .tensor import Rng, matmul, row_reduce, sigmoid, softplus

__all__ = [
    "FFConfig",
    "LayerState",
    "ProbeState",
    "ProbeResult",
    "EpochMetrics",
    "RunMetrics",
    "layer_forward",
    "ff_layer_loss",
    "peer_penalty",
    "train_layer_batch",
    "train_network",
    "multipass_scores",
    "multipass_predict",
    "linear_probe",
    "build_layers",
]

LENGTH_NORM_EPS = 1e-8
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
PEER_DECAY = 0.9


@dataclass(frozen=True)
class FFConfig:
    """Everything that determines a training run (with the seed)."""

    layer_sizes: tuple = (2000, 2000, 2000, 2000)
    threshold: float = 2.0
    learning_rate: float = 1e-3
    weight_decay: float = 3e-4
    batch_size: int = 100
    epochs: int = 20
    peer_coeff: float = 0.03
    goodness: str = "sum_of_squares"
    goodness_params: GoodnessParams = field(default_factory=GoodnessParams)
    seed: int = 0
    # divide each row by its L2 norm before every layer except the first
    length_normalize_between_layers: bool = True
    # goodness of these layer indices is summed during multi-pass
    # scoring; None = every layer except the first (the whole net if it
    # has a single layer), because layer 0 sees the raw label pixels
    multipass_layers: tuple = None
    train_subset: int = None  # None = full training set
    eval_subset: int = 1000
    probe_epochs: int = 20
    probe_learning_rate: float = 1e-3
    probe_batch_size: int = 100
    init_scale: float = 1.0

    def __post_init__(self):
        if not self.layer_sizes or any(int(w) < 1 for w in self.layer_sizes):
            raise ValueError("layer_sizes must be positive")
        if not math.isfinite(self.threshold):
            raise ValueError("threshold must be finite")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1 or self.probe_batch_size < 1:
            raise ValueError("batch sizes must be >= 1")
        if self.peer_coeff < 0:
            raise ValueError("peer_coeff must be >= 0")
        registry_lookup(self.goodness)  # fail fast on unknown names
        object.__setattr__(self, "layer_sizes", tuple(int(w) for w in self.layer_sizes))
        if self.multipass_layers is not None:
            object.__setattr__(
                self, "multipass_layers", tuple(int(i) for i in self.multipass_layers)
            )

    def with_overrides(self, **kwargs):
        return replace(self, **kwargs)


class LayerState:
    """One dense layer plus its optimizer and goodness bookkeeping."""

    def __init__(self, in_dim, out_dim, goodness_name, params, rng, init_scale=1.0):
        self.in_dim = int(in_dim)
        self.out_dim = int(out_dim)
        scale = init_scale / math.sqrt(self.in_dim)
        self.W = rng.standard_normal((self.out_dim, self.in_dim)) * scale
        self.b = np.zeros((1, self.out_dim))
        self.m_W = np.zeros_like(self.W)
        self.v_W = np.zeros_like(self.W)
        self.m_b = np.zeros_like(self.b)
        self.v_b = np.zeros_like(self.b)
        self.step = 0
        self.peer_mean = np.zeros((1, self.out_dim))
        self.goodness_state = make_state(goodness_name, self.out_dim, params)

    ARRAY_KEYS = ("W", "b", "m_W", "v_W", "m_b", "v_b", "peer_mean")

    def arrays(self):
        """Name -> array of everything that defines the layer (for
        checkpointing); goodness state arrays are prefixed."""
        out = {key: getattr(self, key) for key in self.ARRAY_KEYS}
        if self.goodness_state is not None:
            _, state_arrays = self.goodness_state.snapshot()
            for key, value in state_arrays.items():
                out["goodness." + key] = value
        return out

    def scalars(self):
        out = {"step": self.step}
        if self.goodness_state is not None:
            out["cov_batches"] = self.goodness_state.cov_batches
        return out

    def load_snapshot(self, mapping, scalars):
        # always copy: checkpoint loads hand over read-only frombuffer
        # views, and layers must own writable memory
        for key in self.ARRAY_KEYS:
            setattr(self, key, np.array(mapping[key], dtype=np.float64, order="C"))
        self.step = int(scalars["step"])
        if self.goodness_state is not None:
            prefix = "goodness."
            for key, value in mapping.items():
                if key.startswith(prefix):
                    setattr(
                        self.goodness_state, key[len(prefix):],
                        np.array(value, dtype=np.float64, order="C"),
                    )
            self.goodness_state.cov_batches = int(scalars.get("cov_batches", 0))


def build_layers(input_dim, cfg, rng):
    dims = (int(input_dim),) + cfg.layer_sizes
    return [
        LayerState(
            dims[i], dims[i + 1], cfg.goodness, cfg.goodness_params,
            rng.child(f"layer{i}"), cfg.init_scale,
        )
        for i in range(len(cfg.layer_sizes))
    ]


def length_normalize(x):
    norms = row_reduce(x, "l2norm")
    return x / (norms + LENGTH_NORM_EPS)


def layer_forward(layer, x, normalize_input):
    """(activations, the input actually fed to the weights)."""
    x = tensor.as_matrix(x, "layer input")
    if x.shape[1] != layer.W.shape[1]:
        raise ShapeMismatchError(
            f"layer expects {layer.W.shape[1]} inputs, got {x.shape[1]}"
        )
    xn = length_normalize(x) if normalize_input else x
    z = matmul(xn, layer.W.T) + layer.b
    return np.maximum(z, 0.0), xn


def ff_layer_loss(g_pos, g_neg, threshold):
    """(scalar loss, dL/dG_pos, dL/dG_neg), batch-mean form.

    Monotone decreasing in G_pos, increasing in G_neg; gradients are the
    matching sigmoids over batch size.
    """
    g_pos = np.asarray(g_pos, dtype=np.float64).reshape(-1, 1)
    g_neg = np.asarray(g_neg, dtype=np.float64).reshape(-1, 1)
    if g_pos.shape != g_neg.shape:
        raise ShapeMismatchError(
            f"goodness shapes differ: {g_pos.shape} vs {g_neg.shape}"
        )
    batch = g_pos.shape[0]
    loss = float(np.mean(softplus(threshold - g_pos) + softplus(g_neg - threshold)))
    d_pos = -sigmoid(threshold - g_pos) / batch
    d_neg = sigmoid(g_neg - threshold) / batch
    return loss, d_pos, d_neg


def peer_penalty(activations, layer, coeff):
    """(penalty, dP/dactivations, updated peer mean).

    peer_mean is an EMA (decay 0.9) of per-neuron mean positive-pass
    activity; the penalty is coeff * sum_i (peer_mean_i - mean_i)^2.
    Gradient reaches the batch only through its 0.1/B share of the EMA.
    The caller commits the returned peer mean after using the gradient.
    """
    batch = activations.shape[0]
    batch_mean = np.mean(activations, axis=0, keepdims=True)
    updated = PEER_DECAY * layer.peer_mean + (1.0 - PEER_DECAY) * batch_mean
    centered = updated - np.mean(updated)
    penalty = float(coeff * np.sum(centered**2))
    grad = np.broadcast_to(
        2.0 * coeff * centered * (1.0 - PEER_DECAY) / batch, activations.shape
    ).copy()
    return penalty, grad, updated


def _paired_goodness(name, a_pos, a_neg, state, params):
    """Goodness results for both passes, evaluated against the same
    (pre-update) state. State advancement is the caller's job."""
    desc = registry_lookup(name)
    if desc.family == "pointwise":
        return (
            goodness_pointwise(desc.mode, a_pos, params),
            goodness_pointwise(desc.mode, a_neg, params),
        )
    if desc.family == "stateful":
        return (
            goodness_stateful(desc.mode, a_pos, state, params, update_state=False),
            goodness_stateful(desc.mode, a_neg, state, params, update_state=False),
        )
    if desc.family == "batch":
        return (
            goodness_batch(desc.mode, a_pos, state, params),
            goodness_batch(desc.mode, a_neg, state, params),
        )
    return goodness_contrastive(desc.mode, a_pos, a_neg, params)


def _adam_step(layer, d_W, d_b, lr, weight_decay):
    layer.step += 1
    t = layer.step
    for param, grad, m, v in (
        (layer.W, d_W, layer.m_W, layer.v_W),
        (layer.b, d_b, layer.m_b, layer.v_b),
    ):
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * grad
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * grad * grad
        m_hat = m / (1.0 - ADAM_BETA1**t)
        v_hat = v / (1.0 - ADAM_BETA2**t)
        param -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    # decoupled weight decay, weights only
    layer.W -= lr * weight_decay * layer.W


def train_layer_batch(layer, x_pos, x_neg, cfg, normalize_input):
    """One local step: forward both passes, local loss + peer penalty,
    analytic gradients through this layer only, Adam update.

    Returns (a_pos, a_neg, stats) where the activations are the ones
    computed BEFORE the update, for the next layer to consume.
    """
    a_pos, xn_pos = layer_forward(layer, x_pos, normalize_input)
    a_neg, xn_neg = layer_forward(layer, x_neg, normalize_input)

    res_pos, res_neg = _paired_goodness(
        cfg.goodness, a_pos, a_neg, layer.goodness_state, cfg.goodness_params
    )
    ff_loss, d_gpos, d_gneg = ff_layer_loss(
        res_pos.values, res_neg.values, cfg.threshold
    )
    penalty, peer_grad, peer_updated = peer_penalty(a_pos, layer, cfg.peer_coeff)
    total = ff_loss + penalty
    if not math.isfinite(total):
        raise TrainingDivergedError(
            f"non-finite loss with goodness {cfg.goodness!r} "
            f"(ff={ff_loss}, peer={penalty}); aborting the epoch"
        )

    # full-gradient relu: d(activation)/d(pre-activation) = 1 everywhere
    d_a_pos = d_gpos * res_pos.grad + peer_grad
    d_a_neg = d_gneg * res_neg.grad
    d_W = matmul(d_a_pos.T, xn_pos) + matmul(d_a_neg.T, xn_neg)
    d_b = (
        np.sum(d_a_pos, axis=0, keepdims=True)
        + np.sum(d_a_neg, axis=0, keepdims=True)
    )

    _adam_step(layer, d_W, d_b, cfg.learning_rate, cfg.weight_decay)
    layer.peer_mean = peer_updated
    if layer.goodness_state is not None:
        layer.goodness_state.update_from_positive(a_pos)

    stats = {
        "loss": total,
        "ff_loss": ff_loss,
        "peer_penalty": penalty,
        "ff_accuracy": float(np.mean(res_pos.values > res_neg.values)),
        "goodness_pos": float(np.mean(res_pos.values)),
        "goodness_neg": float(np.mean(res_neg.values)),
    }
    return a_pos, a_neg, stats


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    ff_loss: tuple        # per layer, averaged over the epoch's batches
    ff_accuracy: tuple    # per layer, fraction of G_pos > G_neg measured
                          # over the training subset after the epoch
    goodness_pos: tuple   # per layer, mean positive goodness
    goodness_neg: tuple
    multipass_accuracy: float
    probe_accuracy: float
    probe_loss: float
    cumulative_flops: int


@dataclass(frozen=True)
class RunMetrics:
    epochs: tuple  # of EpochMetrics

    @property
    def final(self):
        return self.epochs[-1]


def _multipass_layer_range(cfg, num_layers):
    if cfg.multipass_layers is not None:
        rng_ = tuple(cfg.multipass_layers)
        if any(i < 0 or i >= num_layers for i in rng_):
            raise ValueError(
                f"multipass_layers {rng_} out of range for {num_layers} layers"
            )
        return rng_
    if num_layers == 1:
        return (0,)
    return tuple(range(1, num_layers))


def multipass_scores(layers, rows, num_classes, cfg, layer_range=None):
    """B x num_classes accumulated goodness, one column per candidate
    label embedded in turn."""
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if layer_range is None:
        layer_range = _multipass_layer_range(cfg, len(layers))
    wanted = set(layer_range)
    scores = np.zeros((rows.shape[0], num_classes))
    for label in range(num_classes):
        x = embed_label(rows, label, num_classes)
        for idx, layer in enumerate(layers):
            normalize = cfg.length_normalize_between_layers and idx > 0
            x, _ = layer_forward(layer, x, normalize)
            if idx in wanted:
                values = evaluate_goodness(
                    cfg.goodness, x, layer.goodness_state, cfg.goodness_params
                )
                scores[:, label] += values[:, 0]
    return scores


def multipass_predict(layers, rows, num_classes, cfg, layer_range=None):
    """Predicted labels; ties resolve to the lowest class index."""
    single = np.asarray(rows).ndim == 1
    scores = multipass_scores(layers, rows, num_classes, cfg, layer_range)
    labels = np.argmax(scores, axis=1)  # first max wins ties
    return int(labels[0]) if single else labels


def _forward_all(layers, x, cfg):
    """Activations of every layer on x (no goodness, no updates)."""
    acts = []
    for idx, layer in enumerate(layers):
        normalize = cfg.length_normalize_between_layers and idx > 0
        x, _ = layer_forward(layer, x, normalize)
        acts.append(x)
    return acts


def probe_features(layers, rows, num_classes, cfg):
    """Concatenated length-normalized activations of layers 2..L on
    neutral-embedded inputs (layer 1 if the net is single-layer). The
    neutral embedding blanks the label slots so the probe cannot read
    the answer from them."""
    rows = embed_neutral(np.atleast_2d(np.asarray(rows, dtype=np.float64)), num_classes)
    acts = _forward_all(layers, rows, cfg)
    take = acts[1:] if len(acts) > 1 else acts
    return np.concatenate([length_normalize(a) for a in take], axis=1)


class ProbeState:
    """Single linear map + softmax trained with Adam on frozen features."""

    def __init__(self, feature_dim, num_classes):
        self.W = np.zeros((num_classes, feature_dim))
        self.b = np.zeros((1, num_classes))
        self.m_W = np.zeros_like(self.W)
        self.v_W = np.zeros_like(self.W)
        self.m_b = np.zeros_like(self.b)
        self.v_b = np.zeros_like(self.b)
        self.step = 0

    def logits(self, features):
        return matmul(features, self.W.T) + self.b


@dataclass(frozen=True)
class ProbeResult:
    accuracy: float
    loss: float
    initial_loss: float
    state: ProbeState


def _log_softmax(logits):
    shifted = logits - np.max(logits, axis=1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))


def _cross_entropy(log_probs, labels):
    return float(-np.mean(log_probs[np.arange(labels.shape[0]), labels]))


def linear_probe(
    layers, train_rows, train_labels, test_rows, test_labels, num_classes, cfg, rng
):
    """Fit the probe on frozen features; report test accuracy and mean
    test cross-entropy. Zero-initialized, so the pre-training loss is
    exactly ln(num_classes)."""
    f_train = probe_features(layers, train_rows, num_classes, cfg)
    f_test = probe_features(layers, test_rows, num_classes, cfg)
    train_labels = np.asarray(train_labels, dtype=np.int64)
    test_labels = np.asarray(test_labels, dtype=np.int64)
    probe = ProbeState(f_train.shape[1], num_classes)

    initial_loss = _cross_entropy(_log_softmax(probe.logits(f_test)), test_labels)

    n = f_train.shape[0]
    batch = min(cfg.probe_batch_size, n)
    for _ in range(cfg.probe_epochs):
        order = rng.permutation(n)
        for start in range(0, n - batch + 1, batch):
            idx = order[start:start + batch]
            fb, yb = f_train[idx], train_labels[idx]
            log_probs = _log_softmax(probe.logits(fb))
            d_logits = np.exp(log_probs)
            d_logits[np.arange(yb.shape[0]), yb] -= 1.0
            d_logits /= yb.shape[0]
            d_W = matmul(d_logits.T, fb)
            d_b = np.sum(d_logits, axis=0, keepdims=True)
            probe.step += 1
            t = probe.step
            for param, grad, m, v in (
                (probe.W, d_W, probe.m_W, probe.v_W),
                (probe.b, d_b, probe.m_b, probe.v_b),
            ):
                m *= ADAM_BETA1
                m += (1.0 - ADAM_BETA1) * grad
                v *= ADAM_BETA2
                v += (1.0 - ADAM_BETA2) * grad * grad
                param -= cfg.probe_learning_rate * (
                    (m / (1.0 - ADAM_BETA1**t))
                    / (np.sqrt(v / (1.0 - ADAM_BETA2**t)) + ADAM_EPS)
                )

    log_probs = _log_softmax(probe.logits(f_test))
    accuracy = float(np.mean(np.argmax(log_probs, axis=1) == test_labels))
    return ProbeResult(accuracy, _cross_entropy(log_probs, test_labels), initial_loss, probe)


def ff_accuracy_sweep(layers, images, labels, num_classes, cfg, rng):
    """Per-layer fraction of samples with G_pos > G_neg, measured with
    the current weights and no updates. Negatives come from the given
    rng so the sweep never disturbs the training negative stream."""
    n = images.shape[0]
    batch = min(cfg.batch_size, n)
    wins = np.zeros(len(layers))
    total = 0
    for start in range(0, n - batch + 1, batch):
        rows = images[start:start + batch]
        labs = labels[start:start + batch]
        x_pos = embed_label(rows, labs, num_classes)
        x_neg, _ = make_negative(rows, labs, num_classes, rng)
        for li, layer in enumerate(layers):
            normalize = cfg.length_normalize_between_layers and li > 0
            a_pos, _ = layer_forward(layer, x_pos, normalize)
            a_neg, _ = layer_forward(layer, x_neg, normalize)
            res_pos, res_neg = _paired_goodness(
                cfg.goodness, a_pos, a_neg, layer.goodness_state, cfg.goodness_params
            )
            wins[li] += np.sum(res_pos.values > res_neg.values)
            x_pos, x_neg = a_pos, a_neg
        total += batch
    return tuple(wins / max(total, 1))


def _refit_states(layers, cfg):
    for layer in layers:
        state = layer.goodness_state
        if state is not None and ("whiten" in state.tracks or "pca" in state.tracks):
            state.refit_projections(cfg.goodness_params)


def train_network(dataset, cfg, meter=None):
    """Train all layers simultaneously, batch by batch.

    Returns (layers, RunMetrics, rng) with one EpochMetrics per epoch:
    training-side FF loss/accuracy per layer plus multi-pass accuracy
    and a freshly fit linear probe on the held-out eval subset.
    """
    meter = meter if meter is not None else CostMeter()
    rng = Rng(cfg.seed)
    num_classes = dataset.num_classes

    n_train = dataset.train_images.shape[0]
    if cfg.train_subset is not None:
        n_train = min(n_train, int(cfg.train_subset))
    train_images = dataset.train_images[:n_train]
    train_labels = dataset.train_labels[:n_train]
    n_eval = min(dataset.test_images.shape[0], int(cfg.eval_subset))
    eval_images = dataset.test_images[:n_eval]
    eval_labels = dataset.test_labels[:n_eval]

    if cfg.batch_size > n_train:
        raise FFBenchError(
            f"batch_size {cfg.batch_size} exceeds training subset {n_train}"
        )

    layers = build_layers(dataset.dim, cfg, rng.child("init"))
    shuffle_rng = rng.child("shuffle")
    negative_rng = rng.child("negatives")

    num_layers = len(layers)
    epoch_rows = []
    with meter.capture():
        for epoch in range(cfg.epochs):
            loss_sums = np.zeros(num_layers)
            gpos_sums = np.zeros(num_layers)
            gneg_sums = np.zeros(num_layers)
            batches = 0
            with meter.phase("train"):
                order = shuffle_rng.permutation(n_train)
                for start in range(0, n_train - cfg.batch_size + 1, cfg.batch_size):
                    idx = order[start:start + cfg.batch_size]
                    rows = train_images[idx]
                    labels = train_labels[idx]
                    x_pos = embed_label(rows, labels, num_classes)
                    x_neg, _ = make_negative(rows, labels, num_classes, negative_rng)
                    for li, layer in enumerate(layers):
                        normalize = cfg.length_normalize_between_layers and li > 0
                        x_pos, x_neg, stats = train_layer_batch(
                            layer, x_pos, x_neg, cfg, normalize
                        )
                        loss_sums[li] += stats["loss"]
                        gpos_sums[li] += stats["goodness_pos"]
                        gneg_sums[li] += stats["goodness_neg"]
                    batches += 1
                _refit_states(layers, cfg)

            with meter.phase("eval"):
                ff_acc = ff_accuracy_sweep(
                    layers, train_images, train_labels, num_classes,
                    cfg, rng.child(f"ffacc{epoch}"),
                )
                predictions = multipass_predict(layers, eval_images, num_classes, cfg)
                multipass_acc = float(np.mean(predictions == eval_labels))

            with meter.phase("probe"):
                probe = linear_probe(
                    layers, train_images, train_labels,
                    eval_images, eval_labels,
                    num_classes, cfg, rng.child(f"probe{epoch}"),
                )

            scale = 1.0 / max(batches, 1)
            epoch_rows.append(EpochMetrics(
                epoch=epoch,
                ff_loss=tuple(loss_sums * scale),
                ff_accuracy=ff_acc,
                goodness_pos=tuple(gpos_sums * scale),
                goodness_neg=tuple(gneg_sums * scale),
                multipass_accuracy=multipass_acc,
                probe_accuracy=probe.accuracy,
                probe_loss=probe.loss,
                cumulative_flops=meter.read().flops,
            ))

    return layers, RunMetrics(tuple(epoch_rows)), rng
