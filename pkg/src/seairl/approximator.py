"""Small feed-forward networks with hand-written reverse-mode gradients.

Every network in the package is an :class:`MlpSpec` plus a flat float64
parameter vector. ``forward`` records a :class:`Tape` that ``backward``
consumes once to produce exact gradients with respect to both the
parameters and the input.

Parameter layout, per layer in order: weight matrix of shape ``(in, out)``
stored row-major, then the bias of length ``out``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, NumericError, UsageError

ACTIVATIONS = ("tanh", "relu")
HEADS = ("linear", "softmax_logits", "gaussian_mean_logstd")

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
LOG_FLOOR = -30.0
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class MlpSpec:
    layer_widths: tuple[int, ...]
    hidden_activation: str = "tanh"
    output_head: str = "linear"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise ConfigError(f"layer_widths must have >= 2 positive entries, got {widths}")
        if self.hidden_activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.hidden_activation!r}")
        if self.output_head not in HEADS:
            raise ConfigError(f"unknown output head {self.output_head!r}")
        if self.output_head == "gaussian_mean_logstd" and widths[-1] % 2:
            raise ConfigError("gaussian head needs an even output width")

    @property
    def in_dim(self) -> int:
        return self.layer_widths[0]

    @property
    def out_dim(self) -> int:
        return self.layer_widths[-1]

    @cached_property
    def layout(self) -> tuple[tuple[int, int, int], ...]:
        """(offset, fan_in, fan_out) for each layer."""
        out, offset = [], 0
        for fan_in, fan_out in zip(self.layer_widths[:-1], self.layer_widths[1:]):
            out.append((offset, fan_in, fan_out))
            offset += (fan_in + 1) * fan_out
        return tuple(out)

    @property
    def n_params(self) -> int:
        return sum((i + 1) * o for _, i, o in self.layout)


def mlp(in_dim: int, out_dim: int, hidden: Sequence[int] = (64, 64),
        activation: str = "tanh", head: str = "linear") -> MlpSpec:
    return MlpSpec((in_dim, *hidden, out_dim), activation, head)


def init_params(spec: MlpSpec, rng: np.random.Generator) -> np.ndarray:
    """Glorot-uniform weights, zero biases."""
    params = np.zeros(spec.n_params)
    for offset, fan_in, fan_out in spec.layout:
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        params[offset:offset + fan_in * fan_out] = rng.uniform(-limit, limit, fan_in * fan_out)
    return params


def unpack(spec: MlpSpec, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views (W, b) into ``params`` for each layer."""
    layers = []
    for offset, fan_in, fan_out in spec.layout:
        w_end = offset + fan_in * fan_out
        layers.append((params[offset:w_end].reshape(fan_in, fan_out),
                       params[w_end:w_end + fan_out]))
    return layers


def check_params(spec: MlpSpec, params: np.ndarray) -> None:
    if params.ndim != 1 or params.shape[0] != spec.n_params:
        raise ConfigError(f"expected {spec.n_params} parameters, got shape {params.shape}")


@dataclass
class Tape:
    spec: MlpSpec
    params: np.ndarray
    activations: list  # input of each layer (post-activation of the previous one)
    single: bool
    consumed: bool = field(default=False)


def forward(spec: MlpSpec, params: np.ndarray, x) -> tuple[np.ndarray, Tape]:
    """Evaluate the network; ``x`` is one input vector or a ``(batch, in)`` matrix.

    The returned output is the raw last-layer value (logits for a softmax head,
    concatenated mean / unclamped log-std for a gaussian head).
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.ndim != 2 or h.shape[1] != spec.in_dim:
        raise ConfigError(f"input width {h.shape[-1]} does not match {spec.in_dim}")
    check_params(spec, params)
    if not np.all(np.isfinite(h)):
        raise NumericError("non-finite network input")
    layers = unpack(spec, params)
    acts = [h]
    relu = spec.hidden_activation == "relu"
    for i, (w, b) in enumerate(layers):
        z = h @ w + b
        if i < len(layers) - 1:
            h = np.maximum(z, 0.0) if relu else np.tanh(z)
            acts.append(h)
        else:
            h = z
    out = h[0] if single else h
    return out, Tape(spec, params, acts, single)


def predict(spec: MlpSpec, params: np.ndarray, x) -> np.ndarray:
    return forward(spec, params, x)[0]


def backward(tape: Tape, upstream) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of ``sum(upstream * output)`` w.r.t. parameters and input."""
    if tape.consumed:
        raise UsageError("tape already consumed by a previous backward call")
    spec = tape.spec
    g = np.asarray(upstream, dtype=np.float64)
    if tape.single:
        g = g[None, :]
    if g.shape != (tape.activations[0].shape[0], spec.out_dim):
        raise ConfigError(f"upstream shape {g.shape} does not match output")
    tape.consumed = True
    layers = unpack(spec, tape.params)
    grads = np.zeros(spec.n_params)
    glayers = unpack(spec, grads)
    relu = spec.hidden_activation == "relu"
    for i in range(len(layers) - 1, -1, -1):
        h_in = tape.activations[i]
        gw, gb = glayers[i]
        gw[...] = h_in.T @ g
        gb[...] = g.sum(axis=0)
        g = g @ layers[i][0].T
        if i > 0:
            if relu:
                g = g * (h_in > 0)
            else:
                g = g * (1.0 - h_in * h_in)
    return grads, (g[0] if tape.single else g)


def forward_backward(spec, params, x, upstream_fn):
    """Convenience: forward, then backward with ``upstream_fn(output)``."""
    out, tape = forward(spec, params, x)
    value, upstream = upstream_fn(out)
    grads, gin = backward(tape, upstream)
    return value, grads, gin


# ----------------------------------------------------------------------------
# distribution heads

def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return shifted / shifted.sum(axis=-1, keepdims=True)


def head_outputs(spec: MlpSpec, raw: np.ndarray):
    """Map raw network output to the head's distribution parameters."""
    if spec.output_head == "softmax_logits":
        return softmax(raw)
    if spec.output_head == "gaussian_mean_logstd":
        return split_gaussian(raw)[:2]
    return raw


def split_gaussian(raw: np.ndarray):
    """(mean, clamped log-std, mask of entries where the clamp is inactive)."""
    d = raw.shape[-1] // 2
    mean, log_std = raw[..., :d], raw[..., d:]
    mask = (log_std > LOG_STD_MIN) & (log_std < LOG_STD_MAX)
    return mean, np.clip(log_std, LOG_STD_MIN, LOG_STD_MAX), mask


def categorical_log_prob(logits: np.ndarray, index) -> np.ndarray:
    logp = log_softmax(logits)
    index = np.asarray(index)
    if logp.ndim == 1:
        return logp[index]
    return logp[np.arange(logp.shape[0]), index]


def categorical_entropy(logits: np.ndarray) -> np.ndarray:
    logp = log_softmax(logits)
    return -(np.exp(logp) * logp).sum(axis=-1)


def gaussian_log_prob(action, mean, log_std) -> np.ndarray:
    z = (action - mean) * np.exp(-log_std)
    return (-0.5 * z * z - log_std - 0.5 * _LOG_2PI).sum(axis=-1)


def gaussian_entropy(log_std) -> np.ndarray:
    return (log_std + 0.5 * (1.0 + _LOG_2PI)).sum(axis=-1)


def categorical_head_sample(logits, rng: np.random.Generator):
    """Draw index/indices from ``softmax(logits)``; returns (index, log_prob)."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite logits")
    probs = softmax(logits)
    u = rng.random(probs.shape[:-1] + (1,))
    index = (np.cumsum(probs, axis=-1) < u).sum(axis=-1)
    index = np.minimum(index, probs.shape[-1] - 1)
    return index, categorical_log_prob(logits, index)


def gaussian_head_sample(mean, log_std, rng: np.random.Generator):
    """Reparameterized draw ``mean + exp(log_std) * eps``; returns (action, log_prob, eps)."""
    mean = np.asarray(mean, dtype=np.float64)
    log_std = np.clip(np.asarray(log_std, dtype=np.float64), LOG_STD_MIN, LOG_STD_MAX)
    eps = rng.standard_normal(mean.shape)
    action = mean + np.exp(log_std) * eps
    return action, gaussian_log_prob(action, mean, log_std), eps


# ----------------------------------------------------------------------------
# optimizer

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(params, grads, state: AdamState, lr=3e-4, beta1=0.9, beta2=0.999,
              eps_hat=1e-8) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam step. Pure: inputs are not modified."""
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ConfigError("shape mismatch between params, grads and optimizer state")
    bad = np.flatnonzero(~np.isfinite(grads))
    if bad.size:
        raise NumericError(f"non-finite gradient at parameter index {int(bad[0])}")
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * grads
    v = beta2 * state.v + (1.0 - beta2) * grads * grads
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    return params - lr * m_hat / (np.sqrt(v_hat) + eps_hat), AdamState(m, v, t)


class Adam:
    """Stateful wrapper over :func:`adam_step` for one parameter vector."""

    def __init__(self, n: int, lr=3e-4, beta1=0.9, beta2=0.999, eps_hat=1e-8):
        self.state = AdamState.zeros(n)
        self.hyper = dict(lr=lr, beta1=beta1, beta2=beta2, eps_hat=eps_hat)

    def step(self, params, grads):
        params, self.state = adam_step(params, grads, self.state, **self.hyper)
        return params


# ----------------------------------------------------------------------------
# testing harness

def grad_check(loss_fn: Callable[[np.ndarray], tuple[float, np.ndarray]], params: np.ndarray,
               eps: float = 1e-5, indices=None) -> float:
    """Largest relative disagreement between analytic and central-difference gradients.

    ``loss_fn(params)`` returns ``(loss, grad)``. The error for each checked
    component is ``|analytic - numeric| / max(1, |analytic|, |numeric|)``.
    """
    if eps <= 0:
        raise ConfigError("eps must be positive")
    params = np.array(params, dtype=np.float64)
    _, analytic = loss_fn(params.copy())
    idx = range(params.size) if indices is None else indices
    worst = 0.0
    for i in idx:
        plus, minus = params.copy(), params.copy()
        plus[i] += eps
        minus[i] -= eps
        numeric = (loss_fn(plus)[0] - loss_fn(minus)[0]) / (2.0 * eps)
        a = analytic[i]
        worst = max(worst, abs(a - numeric) / max(1.0, abs(a), abs(numeric)))
    return worst


@dataclass
class Net:
    """A spec with its parameter vector."""

    spec: MlpSpec
    params: np.ndarray

    @classmethod
    def create(cls, spec: MlpSpec, rng: np.random.Generator) -> "Net":
        return cls(spec, init_params(spec, rng))

    def __call__(self, x) -> np.ndarray:
        return forward(self.spec, self.params, x)[0]

    def forward(self, x):
        return forward(self.spec, self.params, x)

    def copy(self) -> "Net":
        return Net(self.spec, self.params.copy())
