"""Fully connected classifier with a split forward path and composite loss.

The network f factors as f = f_n o g_n at every hidden depth n: g_n maps
the input to the post-activation output of hidden layer n (g_0 is the
identity) and f_n maps that representation to the output distribution.
Training minimizes the sum of two cross-entropy terms, one averaged over a
batch of measured inputs pushed through the whole network and one averaged
over a batch of synthetic layer-n representations pushed through f_n only.
Synthetic representations are constants during backpropagation: their
gradients stop at layer n.

Parameters live in one flat float64 vector with per-layer views, so the
optimizer updates the whole model with a handful of vector operations.
All arithmetic is 64-bit; everything is deterministic given the seeds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import Pattern

LOG_CLAMP = 1e-12

Batch = "tuple[np.ndarray, np.ndarray] | None"


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    output_dim: int
    hidden_dims: tuple[int, ...] = (64, 64, 64)

    def __post_init__(self):
        dims = (self.input_dim, self.output_dim, *self.hidden_dims)
        if any(d < 1 for d in dims):
            raise ValueError("all layer widths must be >= 1")

    @property
    def n_hidden(self) -> int:
        return len(self.hidden_dims)

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_dims, self.output_dim)

    def layer_width(self, n: int) -> int:
        """Width of the representation at depth n (0 = input)."""
        return self.layer_dims[n]

    def param_count(self) -> int:
        dims = self.layer_dims
        return sum(dims[i + 1] * dims[i] + dims[i + 1] for i in range(len(dims) - 1))


def _build_views(config: ModelConfig, flat: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    weights, biases = [], []
    dims = config.layer_dims
    offset = 0
    for i in range(len(dims) - 1):
        n_in, n_out = dims[i], dims[i + 1]
        weights.append(flat[offset : offset + n_out * n_in].reshape(n_out, n_in))
        offset += n_out * n_in
        biases.append(flat[offset : offset + n_out])
        offset += n_out
    return weights, biases


@dataclass
class Mlp:
    """Model parameters: flat vector plus per-layer (out, in) weight views.

    Treat instances as immutable once handed out; ``copy()`` gives an
    independent model for in-place optimization.
    """

    config: ModelConfig
    params: np.ndarray

    def __post_init__(self):
        expected = self.config.param_count()
        if self.params.shape != (expected,):
            raise ValueError(f"expected {expected} parameters, got {self.params.shape}")
        self.weights, self.biases = _build_views(self.config, self.params)

    def copy(self) -> "Mlp":
        return Mlp(config=self.config, params=self.params.copy())


@dataclass
class Gradients:
    """Loss gradients in the same flat layout as the model parameters."""

    config: ModelConfig
    flat: np.ndarray

    def __post_init__(self):
        self.weights, self.biases = _build_views(self.config, self.flat)

    @classmethod
    def zeros(cls, config: ModelConfig) -> "Gradients":
        return cls(config=config, flat=np.zeros(config.param_count()))


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    learning_rate: float = 1.0e-4
    epochs: int = 20
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1.0e-8
    seed: int = 0

    def __post_init__(self):
        if min(self.batch_size, self.epochs) < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if min(self.learning_rate, self.adam_eps) <= 0:
            raise ValueError("learning_rate and adam_eps must be positive")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("adam betas must lie in [0, 1)")


@dataclass
class AdamState:
    """First/second moment accumulators and the step counter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, config: ModelConfig) -> "AdamState":
        n = config.param_count()
        return cls(m=np.zeros(n), v=np.zeros(n), t=0)

    def copy(self) -> "AdamState":
        return AdamState(m=self.m.copy(), v=self.v.copy(), t=self.t)


def init_model(config: ModelConfig, seed: int) -> Mlp:
    """Uniform Glorot weights within +-sqrt(6/(fan_in+fan_out)), zero biases."""
    rng = np.random.default_rng(seed)
    model = Mlp(config=config, params=np.zeros(config.param_count()))
    for w in model.weights:
        n_out, n_in = w.shape
        limit = np.sqrt(6.0 / (n_in + n_out))
        w[:] = rng.uniform(-limit, limit, size=(n_out, n_in))
    return model


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def forward_to(model: Mlp, n: int, x: np.ndarray) -> np.ndarray:
    """g_n: input to the post-activation output of hidden layer n (identity at n=0)."""
    if not 0 <= n <= model.config.n_hidden:
        raise ValueError(f"layer index {n} outside 0..{model.config.n_hidden}")
    h = np.asarray(x, dtype=np.float64)
    if h.shape[-1] != model.config.input_dim:
        raise ValueError(f"input width {h.shape[-1]} != {model.config.input_dim}")
    for i in range(n):
        h = np.maximum(h @ model.weights[i].T + model.biases[i], 0.0)
    return h


def forward_from(model: Mlp, n: int, z: np.ndarray) -> np.ndarray:
    """f_n: layer-n representation to the output probability vector."""
    if not 0 <= n <= model.config.n_hidden:
        raise ValueError(f"layer index {n} outside 0..{model.config.n_hidden}")
    h = np.asarray(z, dtype=np.float64)
    if h.shape[-1] != model.config.layer_width(n):
        raise ValueError(f"representation width {h.shape[-1]} != {model.config.layer_width(n)}")
    n_hidden = model.config.n_hidden
    for i in range(n, n_hidden):
        h = np.maximum(h @ model.weights[i].T + model.biases[i], 0.0)
    logits = h @ model.weights[n_hidden].T + model.biases[n_hidden]
    return _softmax(logits)


def forward(model: Mlp, x: np.ndarray) -> np.ndarray:
    """Full network output f(x) = f_n(g_n(x)) for any n."""
    return forward_from(model, 0, np.asarray(x, dtype=np.float64))


def cross_entropy(yhat: np.ndarray, target: np.ndarray) -> float:
    """-sum(target * log(yhat)) with logs clamped at 1e-12.

    For 2-D inputs, the mean over rows.
    """
    yhat = np.asarray(yhat, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if yhat.shape != target.shape:
        raise ValueError(f"shape mismatch {yhat.shape} vs {target.shape}")
    ll = np.log(np.maximum(yhat, LOG_CLAMP))
    if yhat.ndim == 1:
        return float(-(target * ll).sum())
    return float(-(target * ll).sum(axis=1).mean())


def _check_batches(model: Mlp, basic_batch, synth_batch, n: int):
    if not 0 <= n <= model.config.n_hidden:
        raise ValueError(f"layer index {n} outside 0..{model.config.n_hidden}")

    def unpack(batch, width, what):
        if batch is None:
            return None
        x, y = batch
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if x.ndim == 1:
            x = x[np.newaxis, :]
        if y.ndim == 1:
            y = y[np.newaxis, :]
        if x.shape[0] == 0:
            return None
        if x.shape[1] != width:
            raise ValueError(f"{what} width {x.shape[1]} != expected {width}")
        if y.shape != (x.shape[0], model.config.output_dim):
            raise ValueError(f"{what} labels shaped {y.shape}, expected ({x.shape[0]}, {model.config.output_dim})")
        return x, y

    return (
        unpack(basic_batch, model.config.input_dim, "basic batch"),
        unpack(synth_batch, model.config.layer_width(n), "synthetic batch"),
    )


def composite_loss(model: Mlp, basic_batch, synth_batch, n: int) -> float:
    """Mean basic-branch cross-entropy plus mean synthetic-branch cross-entropy.

    Either batch may be None or empty; an empty batch contributes zero.
    """
    basic, synth = _check_batches(model, basic_batch, synth_batch, n)
    loss = 0.0
    if basic is not None:
        loss += cross_entropy(forward(model, basic[0]), basic[1])
    if synth is not None:
        loss += cross_entropy(forward_from(model, n, synth[0]), synth[1])
    return loss


def _branch_backward(
    weights: Sequence[np.ndarray],
    biases: Sequence[np.ndarray],
    entry: int,
    x: np.ndarray,
    target: np.ndarray,
    grad_w: Sequence[np.ndarray],
    grad_b: Sequence[np.ndarray],
) -> float:
    """Forward/backward of one branch; accumulates into the gradient views
    and returns the branch's mean cross-entropy."""
    n_layers = len(weights)  # hidden layers + output layer
    acts = [x]
    h = x
    for i in range(entry, n_layers - 1):
        h = np.maximum(h @ weights[i].T + biases[i], 0.0)
        acts.append(h)
    logits = h @ weights[-1].T + biases[-1]
    yhat = _softmax(logits)

    n_rows = x.shape[0]
    loss = float(-(target * np.log(np.maximum(yhat, LOG_CLAMP))).sum(axis=1).mean())

    # d(mean CE)/d(yhat), exact for the clamped log (zero where clamped)
    gy = np.where(yhat > LOG_CLAMP, -target / yhat, 0.0) / n_rows
    delta = yhat * (gy - (gy * yhat).sum(axis=1, keepdims=True))
    for i in range(n_layers - 1, entry - 1, -1):
        grad_w[i] += delta.T @ acts[i - entry]
        grad_b[i] += delta.sum(axis=0)
        if i > entry:
            delta = (delta @ weights[i]) * (acts[i - entry] > 0.0)
    return loss


def backward(model: Mlp, basic_batch, synth_batch, n: int) -> Gradients:
    """Exact gradients of ``composite_loss`` for every weight and bias.

    The synthetic branch contributes only to layers above n; the basic
    branch reaches every layer.
    """
    basic, synth = _check_batches(model, basic_batch, synth_batch, n)
    grads = Gradients.zeros(model.config)
    if basic is not None:
        _branch_backward(model.weights, model.biases, 0, basic[0], basic[1], grads.weights, grads.biases)
    if synth is not None:
        _branch_backward(model.weights, model.biases, n, synth[0], synth[1], grads.weights, grads.biases)
    return grads


def _adam_update_inplace(
    params: np.ndarray,
    grad: np.ndarray,
    state: AdamState,
    config: TrainConfig,
) -> None:
    b1, b2 = config.adam_beta1, config.adam_beta2
    state.t += 1
    state.m *= b1
    state.m += (1.0 - b1) * grad
    state.v *= b2
    state.v += (1.0 - b2) * (grad * grad)
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    denom = np.sqrt(state.v / c2)
    denom += config.adam_eps
    params -= (config.learning_rate / c1) * (state.m / denom)


def adam_step(
    model: Mlp,
    grads: Gradients,
    state: AdamState,
    config: TrainConfig,
) -> tuple[Mlp, AdamState]:
    """One Adam update with bias correction; returns fresh model and state."""
    if grads.flat.shape != model.params.shape:
        raise ValueError("gradient/parameter shape mismatch")
    new_model = model.copy()
    new_state = state.copy()
    _adam_update_inplace(new_model.params, grads.flat, new_state, config)
    return new_model, new_state


def one_hot(ids: np.ndarray, n_classes: int) -> np.ndarray:
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= n_classes):
        raise ValueError("class id outside 0..n_classes-1")
    out = np.zeros((ids.shape[0], n_classes))
    out[np.arange(ids.shape[0]), ids] = 1.0
    return out


def _as_xy(train_patterns) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(train_patterns, tuple) and len(train_patterns) == 2:
        x, y = train_patterns
        return np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.int64)
    pats: Sequence[Pattern] = list(train_patterns)
    if not pats:
        raise ValueError("no training patterns")
    return np.stack([p.x for p in pats]), np.array([p.motion for p in pats], dtype=np.int64)


def train(
    model: Mlp,
    train_basic_patterns,
    vocab,
    synth_config,
    train_config: TrainConfig,
    rng: np.random.Generator | None = None,
) -> tuple[Mlp, list[float]]:
    """Minibatch training of the composite loss; returns (model, loss history).

    ``train_basic_patterns`` is a sequence of Patterns or a ``(x, class_id)``
    array pair.  Every step pairs one measured minibatch with one synthetic
    minibatch of the same size (when synthesis is enabled).  Synthetic data
    are built once up front for input-layer synthesis and rebuilt from the
    current weights at the start of every epoch for hidden-layer synthesis.
    The loss history holds one mean composite loss per epoch.
    """
    from .mixer import synthesize_arrays  # local import to avoid a cycle

    if rng is None:
        rng = np.random.default_rng(train_config.seed)
    x_all, y_ids = _as_xy(train_basic_patterns)
    if x_all.shape[0] == 0:
        raise ValueError("no training patterns")
    n_classes = model.config.output_dim
    y_all = one_hot(y_ids, n_classes)

    layer = synth_config.layer_n
    use_synth = synth_config.total_count > 0
    if layer > model.config.n_hidden:
        raise ValueError(f"synthesis layer {layer} exceeds model depth {model.config.n_hidden}")

    model = model.copy()
    state = AdamState.zeros(model.config)
    grads = Gradients.zeros(model.config)
    n = x_all.shape[0]
    bs = train_config.batch_size

    z_all = ys_all = None
    if use_synth and layer == 0:
        z_all, ys_all = synthesize_arrays(model, x_all, y_ids, vocab, synth_config, rng)

    history: list[float] = []
    for _ in range(train_config.epochs):
        perm = rng.permutation(n)
        if use_synth and layer >= 1:
            z_all, ys_all = synthesize_arrays(model, x_all, y_ids, vocab, synth_config, rng)
        if use_synth:
            synth_perm = rng.permutation(z_all.shape[0])
            synth_pos = 0

        epoch_loss = 0.0
        n_steps = 0
        for start in range(0, n, bs):
            idx = perm[start : start + bs]
            xb, yb = x_all[idx], y_all[idx]
            zb = ysb = None
            if use_synth:
                take = np.arange(synth_pos, synth_pos + idx.size) % synth_perm.size
                sidx = synth_perm[take]
                synth_pos += idx.size
                zb, ysb = z_all[sidx], ys_all[sidx]

            grads.flat.fill(0.0)
            loss = _branch_backward(
                model.weights, model.biases, 0, xb, yb, grads.weights, grads.biases
            )
            if zb is not None:
                loss += _branch_backward(
                    model.weights, model.biases, layer, zb, ysb, grads.weights, grads.biases
                )
            _adam_update_inplace(model.params, grads.flat, state, train_config)
            epoch_loss += loss
            n_steps += 1
        history.append(epoch_loss / n_steps)
    return model, history


def save_model(model: Mlp, path: str | Path) -> None:
    """Checkpoint as JSON; round-trips bitwise through ``load_model``."""
    payload = {
        "schema_version": 1,
        "config": {
            "input_dim": model.config.input_dim,
            "output_dim": model.config.output_dim,
            "hidden_dims": list(model.config.hidden_dims),
        },
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_model(path: str | Path) -> Mlp:
    with open(path, "r") as fh:
        payload = json.load(fh)
    if payload.get("schema_version") != 1:
        raise ValueError(f"unsupported checkpoint schema {payload.get('schema_version')!r}")
    cfg = payload["config"]
    config = ModelConfig(
        input_dim=int(cfg["input_dim"]),
        output_dim=int(cfg["output_dim"]),
        hidden_dims=tuple(int(h) for h in cfg["hidden_dims"]),
    )
    model = Mlp(config=config, params=np.zeros(config.param_count()))
    for w_view, w in zip(model.weights, payload["weights"]):
        w_view[:] = np.array(w, dtype=np.float64)
    for b_view, b in zip(model.biases, payload["biases"]):
        b_view[:] = np.array(b, dtype=np.float64)
    return model
