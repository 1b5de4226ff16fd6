"""Situational empowerment: inverse-model and regularizer losses, the
closed-form action distribution, EM on tabular problems, and exact oracles.

Conventions. The inverse model Omega maps ``s ⊕ c ⊕ s'`` to either action
logits (discrete) or an action mean (continuous). For continuous actions its
log-likelihood is that of a unit-variance Gaussian around the mean, which is
the density whose maximum-likelihood fit is the squared-error loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from .approximator import LOG_FLOOR, Net, forward, backward
from .errors import ConfigError
from .policy import log_prob_head

_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


def inverse_input(s, c_enc, s_next) -> np.ndarray:
    return np.concatenate([np.atleast_2d(s), np.atleast_2d(c_enc), np.atleast_2d(s_next)], axis=1)


def _inverse_logp(inv: Net, x, a):
    """log Omega(a | x) per row (floored) and the raw->logp vjp."""
    raw, tape = forward(inv.spec, inv.params, x)
    if inv.spec.output_head == "softmax_logits":
        logp, draw = log_prob_head(inv.spec, raw, a)
        return logp, draw, tape
    diff = raw - np.asarray(a, dtype=np.float64)
    logp = -0.5 * (diff * diff).sum(axis=1) - raw.shape[1] * _HALF_LOG_2PI
    live = logp > LOG_FLOOR
    return np.maximum(logp, LOG_FLOOR), (lambda g: -(g * live)[:, None] * diff), tape


def inverse_log_prob(inv: Net, s, c_enc, s_next, a) -> np.ndarray:
    return _inverse_logp(inv, inverse_input(s, c_enc, s_next), a)[0]


def inverse_loss_lq(inv: Net, s, c_enc, s_next, a) -> tuple[float, np.ndarray]:
    """Inverse-model loss and its gradient in the inverse-model parameters.

    Discrete: mean negative log-likelihood. Continuous: mean over the batch
    of the squared error summed over action dimensions.
    """
    x = inverse_input(s, c_enc, s_next)
    n = x.shape[0]
    if n == 0:
        raise ConfigError("inverse loss needs a non-empty batch")
    if inv.spec.output_head == "softmax_logits":
        logp, draw, tape = _inverse_logp(inv, x, a)
        return float(-logp.mean()), backward(tape, draw(np.full(n, -1.0 / n)))[0]
    raw, tape = forward(inv.spec, inv.params, x)
    diff = raw - np.asarray(a, dtype=np.float64).reshape(raw.shape)
    loss = float((diff * diff).sum() / n)
    return loss, backward(tape, 2.0 * diff / n)[0]


def reg_residual_loss(log_omega, logp, phi):
    """``mean (log_omega - logp - phi)^2`` and its gradient w.r.t. ``logp``
    (identical to the gradient w.r.t. ``phi``); ``log_omega`` is a constant."""
    d = np.asarray(log_omega) - np.asarray(logp) - np.asarray(phi)
    return float(np.mean(d * d)), -2.0 * d / d.size


def empowerment_reg_loss_lI(policy: Net, potential: Net, log_omega, s, c_enc, a):
    """Regularizer pulling ``log pi(a|s,c) + Phi(s,c)`` onto a fixed ``log Omega``.

    Returns ``(loss, policy grad, potential grad)``. No gradient reaches the
    inverse model; pass its log-likelihood in as data.
    """
    x = np.concatenate([np.atleast_2d(s), np.atleast_2d(c_enc)], axis=1)
    raw, tape_pi = forward(policy.spec, policy.params, x)
    logp, draw = log_prob_head(policy.spec, raw, a)
    phi, tape_phi = forward(potential.spec, potential.params, x)
    loss, g = reg_residual_loss(log_omega, logp, phi[:, 0])
    g_pi = backward(tape_pi, draw(g))[0]
    g_phi = backward(tape_phi, g[:, None])[0]
    return loss, g_pi, g_phi


def analytic_w_star(expected_log_omega, beta: float = 1.0):
    """Maximizer of ``H(w)/beta + sum_a w(a) E[log Omega]`` over the simplex.

    Returns ``(w, logZ)`` with ``w = softmax(beta * u)``, ``logZ =
    logsumexp(beta * u)``; works along the last axis.
    """
    if not beta >= 0 or not np.isfinite(beta):
        raise ConfigError("beta must be finite and non-negative")
    u = beta * np.asarray(expected_log_omega, dtype=np.float64)
    return softmax(u, axis=-1), logsumexp(u, axis=-1)


# ----------------------------------------------------------------------------
# tabular oracles

@dataclass(frozen=True)
class TabularMdp:
    """``P[s, c, a, s']``; a code-free problem has a single code slice."""

    P: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.P, dtype=np.float64)
        if P.ndim == 3:
            P = P[:, None]
        if P.ndim != 4 or np.any(P < 0) or not np.allclose(P.sum(-1), 1.0, atol=1e-12):
            raise ConfigError("transition tensor must be [s, (c,) a, s'] with simplex rows")
        object.__setattr__(self, "P", P)

    n_states = property(lambda self: self.P.shape[0])
    n_codes = property(lambda self: self.P.shape[1])
    n_actions = property(lambda self: self.P.shape[2])

    @classmethod
    def random(cls, rng, n_states: int, n_actions: int, n_codes: int = 1, sparsity: float = 0.0):
        P = rng.dirichlet(np.ones(n_states), size=(n_states, n_codes, n_actions))
        if sparsity:
            P = P * (rng.random(P.shape) >= sparsity)
            P[P.sum(-1) == 0, 0] = 1.0
            P /= P.sum(-1, keepdims=True)
        return cls(P)

    def channel(self, s: int, c: int = 0) -> np.ndarray:
        return self.P[s, c]


def _check_simplex(w):
    w = np.asarray(w, dtype=np.float64)
    if np.any(w < -1e-12) or abs(w.sum() - 1.0) > 1e-9:
        raise ConfigError("action distribution is not on the simplex")
    return np.clip(w, 0.0, None)


def _xlogy(x, y):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 0, x * np.log(np.where(x > 0, y, 1.0)), 0.0)


def bayes_posterior(mdp: TabularMdp, w, s: int, c: int = 0) -> np.ndarray:
    """``Omega[a, s'] = p(a | s, c, s')`` under ``w``; uniform where ``p(s') = 0``."""
    joint = _check_simplex(w)[:, None] * mdp.channel(s, c)
    marg = joint.sum(0, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        post = np.where(marg > 0, joint / marg, 1.0 / mdp.n_actions)
    return post


def exact_situational_mi(mdp: TabularMdp, w, s: int, c: int = 0) -> float:
    """``I(a; s' | s, c) = H(a|s,c) - H(a|s,c,s')`` in nats."""
    w = _check_simplex(w)
    joint = w[:, None] * mdp.channel(s, c)
    h_a = -_xlogy(w, w).sum()
    h_a_given = -_xlogy(joint, bayes_posterior(mdp, w, s, c)).sum()
    return max(float(h_a - h_a_given), 0.0)


def expected_log_omega(mdp: TabularMdp, omega, s: int, c: int = 0) -> np.ndarray:
    """``u[a] = sum_s' P(s'|s,a,c) log Omega[a, s']`` (0 log 0 = 0)."""
    return _xlogy(mdp.channel(s, c), omega).sum(axis=1)


def variational_bound_estimate(w, omega, mdp: TabularMdp, s: int, c: int = 0, n: int | None = None,
                               rng: np.random.Generator | None = None) -> float:
    """``H(w) + E[log Omega(a|s,c,s')]``, exactly (``n=None``) or by sampling.

    The sampled form averages ``-log w(a) + log Omega(a, s')`` over ``n`` draws
    of ``a ~ w, s' ~ P``, an unbiased estimate of the same quantity.
    """
    w = _check_simplex(w)
    omega = np.asarray(omega, dtype=np.float64)
    P = mdp.channel(s, c)
    if n is None:
        u = _xlogy(P, omega).sum(axis=1)
        # actions with w(a) = 0 contribute nothing even where Omega(a|.) underflowed to 0
        return float(-_xlogy(w, w).sum() + (w[w > 0] * u[w > 0]).sum())
    if n < 1 or rng is None:
        raise ConfigError("sample mode needs n >= 1 and an rng")
    a = rng.choice(len(w), size=n, p=w)
    cdf = np.cumsum(P[a], axis=1)
    s_next = (rng.random((n, 1)) > cdf).sum(axis=1).clip(max=P.shape[1] - 1)
    with np.errstate(divide="ignore"):
        return float(np.mean(-np.log(w[a]) + np.log(omega[a, s_next])))


@dataclass
class EmResult:
    w: np.ndarray        # (S, A)
    omega: np.ndarray    # (S, A, S')
    phi: np.ndarray      # (S,) log partition of the last E-step
    trace: np.ndarray    # (iterations + 1, S) bound after each full iteration
    converged: bool


def em_optimize(mdp: TabularMdp, c: int = 0, beta: float = 1.0, iters: int = 50, tol: float = 1e-10,
                w0=None) -> EmResult:
    """Alternate Omega <- Bayes posterior of w and w <- analytic_w_star, per state.

    The trace holds the bound ``L(w_k, Omega_k)`` where ``Omega_k`` is the
    posterior computed from ``w_{k-1}``; entry 0 uses the initial ``w`` and
    its own posterior. With ``beta = 1`` each row is non-decreasing.
    Convergence means the last step moved no bound by more than ``tol``.
    """
    S, A = mdp.n_states, mdp.n_actions
    w = np.full((S, A), 1.0 / A) if w0 is None else np.array(w0, dtype=np.float64)
    omega = np.stack([bayes_posterior(mdp, w[s], s, c) for s in range(S)])
    phi = np.zeros(S)
    trace = [[variational_bound_estimate(w[s], omega[s], mdp, s, c) for s in range(S)]]
    converged = False
    for _ in range(iters):
        omega = np.stack([bayes_posterior(mdp, w[s], s, c) for s in range(S)])
        for s in range(S):
            w[s], phi[s] = analytic_w_star(expected_log_omega(mdp, omega[s], s, c), beta)
        trace.append([variational_bound_estimate(w[s], omega[s], mdp, s, c) for s in range(S)])
        if np.max(np.abs(np.subtract(trace[-1], trace[-2]))) <= tol:
            converged = True
            break
    return EmResult(w, omega, phi, np.array(trace), converged)
