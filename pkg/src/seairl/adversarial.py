"""Adversarial reward learning: the shaped reward f, the structured
discriminator and its loss, the policy's alternative reward, the flat
discriminator baseline, and tabular value iteration for shaping checks.

Label convention: every discriminator here is trained towards 1 on expert
data and towards 0 on generated data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit

from .approximator import Net, backward, forward
from .errors import ConfigError


@dataclass
class DiscriminatorBatch:
    """One side (expert or generated) of a discriminator update.

    ``a_enc`` is the network encoding of the action (one-hot or raw vector);
    ``terminal`` marks goal-reaching last steps, where the next-state
    potential is dropped; ``log_pi`` is the current policy's log-density of
    ``a`` and is treated as a constant.
    """

    s: np.ndarray
    a_enc: np.ndarray
    c_enc: np.ndarray
    s_next: np.ndarray
    c_next_enc: np.ndarray
    terminal: np.ndarray
    log_pi: np.ndarray

    def __len__(self):
        return len(self.s)

    def take(self, idx) -> "DiscriminatorBatch":
        return DiscriminatorBatch(*(getattr(self, f)[idx] for f in self.__dataclass_fields__))


@dataclass
class ShapedRewardValue:
    f: np.ndarray
    r: np.ndarray
    phi_next_target: np.ndarray   # already zeroed on terminal steps
    phi_curr: np.ndarray
    gamma: float

    def recompute(self) -> np.ndarray:
        return self.r + self.gamma * self.phi_next_target - self.phi_curr


def reward_input(s, a_enc, c_enc):
    return np.concatenate([np.atleast_2d(s), np.atleast_2d(a_enc), np.atleast_2d(c_enc)], axis=1)


def potential_input(s, c_enc):
    return np.concatenate([np.atleast_2d(s), np.atleast_2d(c_enc)], axis=1)


def _shaped(reward: Net, potential: Net, potential_target: Net, b: DiscriminatorBatch, gamma: float):
    r, tape_r = forward(reward.spec, reward.params, reward_input(b.s, b.a_enc, b.c_enc))
    phi, tape_phi = forward(potential.spec, potential.params, potential_input(b.s, b.c_enc))
    phi_next = potential_target(potential_input(b.s_next, b.c_next_enc))[:, 0]
    phi_next = np.where(np.asarray(b.terminal, bool), 0.0, phi_next)
    value = ShapedRewardValue(r[:, 0] + gamma * phi_next - phi[:, 0], r[:, 0], phi_next,
                              phi[:, 0], gamma)
    return value, tape_r, tape_phi


def shaped_f(reward: Net, potential: Net, potential_target: Net, batch: DiscriminatorBatch,
             gamma: float) -> ShapedRewardValue:
    """``f = r(s,a,c) + gamma * Phi_target(s',c') - Phi(s,c)``, per transition."""
    return _shaped(reward, potential, potential_target, batch, gamma)[0]


def discriminator(f, log_pi):
    """``D = exp(f) / (exp(f) + pi) = sigmoid(f - log pi)``, overflow-free."""
    return expit(np.asarray(f) - np.asarray(log_pi))


def bce_from_logits(z_expert, z_generated):
    """``-(mean log D_E + mean log(1 - D_G)) / 2`` and gradients w.r.t. both logit arrays."""
    z_e, z_g = np.asarray(z_expert), np.asarray(z_generated)
    if z_e.size == 0 or z_g.size == 0:
        raise ConfigError("discriminator loss needs expert and generated samples")
    loss = -0.5 * (log_expit(z_e).mean() + log_expit(-z_g).mean())
    return float(loss), 0.5 * (expit(z_e) - 1.0) / z_e.size, 0.5 * expit(z_g) / z_g.size


def discriminator_loss(reward: Net, potential: Net, potential_target: Net,
                       expert: DiscriminatorBatch, generated: DiscriminatorBatch, gamma: float):
    """Cross-entropy of the structured discriminator.

    Returns ``(loss, reward grad, potential grad)``; the target potential and
    the policy log-densities are constants.
    """
    fe, tr_e, tp_e = _shaped(reward, potential, potential_target, expert, gamma)
    fg, tr_g, tp_g = _shaped(reward, potential, potential_target, generated, gamma)
    loss, g_e, g_g = bce_from_logits(fe.f - expert.log_pi, fg.f - generated.log_pi)
    g_r = backward(tr_e, g_e[:, None])[0] + backward(tr_g, g_g[:, None])[0]
    g_phi = -(backward(tp_e, g_e[:, None])[0] + backward(tp_g, g_g[:, None])[0])
    return loss, g_r, g_phi


def alternative_reward(f, bonus, lambda_q: float):
    """``f + lambda_q * log Q(c_t | c_{t-1}, s_t, a_{t-1})``."""
    return np.asarray(f) + lambda_q * np.asarray(bonus)


# ----------------------------------------------------------------------------
# flat baseline discriminator over (s, a[, c])

def flat_input(s, a_enc, c_enc=None):
    parts = [np.atleast_2d(s), np.atleast_2d(a_enc)]
    if c_enc is not None:
        parts.append(np.atleast_2d(c_enc))
    return np.concatenate(parts, axis=1)


def gail_discriminator_loss(disc: Net, x_expert, x_generated):
    """Cross-entropy of ``D = sigmoid(disc(x))``; returns ``(loss, grad)``."""
    z_e, tape_e = forward(disc.spec, disc.params, x_expert)
    z_g, tape_g = forward(disc.spec, disc.params, x_generated)
    loss, g_e, g_g = bce_from_logits(z_e[:, 0], z_g[:, 0])
    return loss, backward(tape_e, g_e[:, None])[0] + backward(tape_g, g_g[:, None])[0]


def gail_reward(disc: Net, x) -> np.ndarray:
    """``-log(1 - D)``: large where the sample looks expert-like."""
    return -log_expit(-disc(x)[:, 0])


# ----------------------------------------------------------------------------
# tabular helpers

def value_iteration(P, R, gamma: float, tol: float = 1e-12, max_iter: int = 100_000):
    """Optimal ``(V, Q)`` for ``P[s, a, s']`` and ``R[s, a, s']``."""
    P, R = np.asarray(P, float), np.asarray(R, float)
    expected_r = (P * R).sum(axis=2)
    V = np.zeros(P.shape[0])
    for _ in range(max_iter):
        Q = expected_r + gamma * P @ V
        V_new = Q.max(axis=1)
        if np.max(np.abs(V_new - V)) < tol:
            return V_new, expected_r + gamma * P @ V_new
        V = V_new
    raise ConfigError("value iteration did not converge")


def greedy_actions(Q, tol: float = 1e-9) -> np.ndarray:
    """Boolean mask of actions within ``tol`` of each state's best value."""
    return Q >= Q.max(axis=1, keepdims=True) - tol


def shape_reward(R, phi, gamma: float):
    """``R[s, a, s'] + gamma * phi[s'] - phi[s]``."""
    phi = np.asarray(phi, float)
    return np.asarray(R, float) + gamma * phi[None, None, :] - phi[:, None, None]
