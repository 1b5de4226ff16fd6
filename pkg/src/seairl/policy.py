"""Log-density, entropy and sampling for the policy/inverse-model heads,
with their derivatives w.r.t. the raw network output."""

from __future__ import annotations

import numpy as np

from .approximator import (LOG_FLOOR, LOG_STD_MAX, LOG_STD_MIN, MlpSpec, categorical_head_sample,
                           gaussian_head_sample, log_softmax, split_gaussian)

_LOG_2PI = np.log(2.0 * np.pi)


def log_prob_head(spec: MlpSpec, raw: np.ndarray, actions):
    """Per-row log-density (floored at ``LOG_FLOOR``) and a map from
    d(loss)/d(logp) to d(loss)/d(raw)."""
    if spec.output_head == "softmax_logits":
        logp_all = log_softmax(raw)
        idx = np.asarray(actions, dtype=np.int64)
        rows = np.arange(raw.shape[0])
        logp = logp_all[rows, idx]
        live = logp > LOG_FLOOR
        probs = np.exp(logp_all)

        def draw(g):
            out = -probs * (g * live)[:, None]
            out[rows, idx] += g * live
            return out
        return np.maximum(logp, LOG_FLOOR), draw
    if spec.output_head == "gaussian_mean_logstd":
        mean, log_std, mask = split_gaussian(raw)
        a = np.asarray(actions, dtype=np.float64)
        inv_std = np.exp(-log_std)
        z = (a - mean) * inv_std
        logp = (-0.5 * z * z - log_std - 0.5 * _LOG_2PI).sum(axis=-1)
        live = logp > LOG_FLOOR

        def draw(g):
            g = (g * live)[:, None]
            return np.concatenate([g * z * inv_std, g * (z * z - 1.0) * mask], axis=-1)
        return np.maximum(logp, LOG_FLOOR), draw
    raise ValueError(f"head {spec.output_head!r} has no density")


def entropy_head(spec: MlpSpec, raw: np.ndarray):
    """Per-row entropy and a map from d(loss)/d(H) to d(loss)/d(raw)."""
    if spec.output_head == "softmax_logits":
        logp = log_softmax(raw)
        p = np.exp(logp)
        h = -(p * logp).sum(axis=-1)

        def draw(g):
            return -g[:, None] * p * (logp + h[:, None])
        return h, draw
    mean, log_std, mask = split_gaussian(raw)
    h = (log_std + 0.5 * (1.0 + _LOG_2PI)).sum(axis=-1)

    def draw(g):
        return np.concatenate([np.zeros_like(mean), g[:, None] * mask], axis=-1)
    return h, draw


def sample_head(spec: MlpSpec, raw: np.ndarray, rng: np.random.Generator):
    if spec.output_head == "softmax_logits":
        return categorical_head_sample(raw, rng)
    mean, log_std, _ = split_gaussian(raw)
    action, logp, _ = gaussian_head_sample(mean, log_std, rng)
    return action, np.maximum(logp, LOG_FLOOR)


def greedy_head(spec: MlpSpec, raw: np.ndarray):
    if spec.output_head == "softmax_logits":
        return raw.argmax(axis=-1)
    return split_gaussian(raw)[0]


__all__ = ["log_prob_head", "entropy_head", "sample_head", "greedy_head",
           "LOG_STD_MIN", "LOG_STD_MAX"]
