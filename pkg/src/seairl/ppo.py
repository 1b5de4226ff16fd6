"""Clipped-surrogate policy optimisation with a learned baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .approximator import Adam, Net, backward, forward
from .empowerment import reg_residual_loss
from .policy import entropy_head, log_prob_head


def gae_advantages(rewards, values, gamma: float, lam: float, terminated: bool) -> np.ndarray:
    """Generalised advantages for one trajectory.

    ``values`` has T+1 entries; the last is the bootstrap value of the final
    state and is ignored (treated as 0) when the episode terminated.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64).copy()
    if len(v) != len(rewards) + 1:
        raise ValueError("values must have one more entry than rewards")
    if terminated:
        v[-1] = 0.0
    delta = rewards + gamma * v[1:] - v[:-1]
    adv = np.zeros_like(delta)
    acc = 0.0
    for t in range(len(delta) - 1, -1, -1):
        acc = delta[t] + gamma * lam * acc
        adv[t] = acc
    return adv


def normalize_advantages(adv) -> np.ndarray:
    adv = np.asarray(adv, dtype=np.float64)
    return (adv - adv.mean()) / max(adv.std(), 1e-8)


@dataclass
class PpoBatch:
    x: np.ndarray            # policy / value input (s ⊕ c)
    actions: np.ndarray
    logp_old: np.ndarray
    advantages: np.ndarray   # already normalised
    returns: np.ndarray
    log_omega: np.ndarray    # regulariser target, constant
    phi: np.ndarray          # potential at (s, c), constant

    def take(self, idx) -> "PpoBatch":
        return PpoBatch(*(getattr(self, f)[idx] for f in self.__dataclass_fields__))


def surrogate_loss(policy: Net, b: PpoBatch, clip: float, lambda_h: float, lambda_i: float):
    """``-clipped surrogate - lambda_h * entropy + lambda_i * l_I`` on a minibatch.

    Returns ``(loss, grad, parts)`` where ``parts`` holds the entropy and l_I means.
    """
    n = len(b.x)
    raw, tape = forward(policy.spec, policy.params, b.x)
    logp, draw_lp = log_prob_head(policy.spec, raw, b.actions)
    ratio = np.exp(logp - b.logp_old)
    unclipped = ratio * b.advantages
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip) * b.advantages
    use_unclipped = unclipped <= clipped
    g_logp = -np.where(use_unclipped, unclipped, 0.0) / n
    loss = -np.minimum(unclipped, clipped).mean()
    ent, draw_h = entropy_head(policy.spec, raw)
    loss -= lambda_h * ent.mean()
    l_i = 0.0
    if lambda_i:
        l_i, g_reg = reg_residual_loss(b.log_omega, logp, b.phi)
        loss += lambda_i * l_i
        g_logp = g_logp + lambda_i * g_reg
    g_raw = draw_lp(g_logp) + draw_h(np.full(n, -lambda_h / n))
    return float(loss), backward(tape, g_raw)[0], {"entropy": float(ent.mean()), "l_I": l_i}


def value_loss(value: Net, x, returns):
    v, tape = forward(value.spec, value.params, x)
    d = v[:, 0] - returns
    return float(np.mean(d * d)), backward(tape, (2.0 * d / len(d))[:, None])[0]


class PpoLearner:
    """Owns the policy/value optimiser state across iterations."""

    def __init__(self, policy: Net, value: Net, lr: float, value_lr: float):
        self.policy, self.value = policy, value
        self.opt_pi = Adam(policy.params.size, lr)
        self.opt_v = Adam(value.params.size, value_lr)

    def update(self, batch: PpoBatch, rng, *, epochs: int, minibatch: int, clip: float,
               lambda_h: float, lambda_i: float) -> dict:
        n = len(batch.x)
        losses, ents, lis, vls = [], [], [], []
        for _ in range(epochs):
            order = rng.permutation(n)
            for start in range(0, n, minibatch):
                mb = batch.take(order[start:start + minibatch])
                loss, g, parts = surrogate_loss(self.policy, mb, clip, lambda_h, lambda_i)
                self.policy.params = self.opt_pi.step(self.policy.params, g)
                vl, gv = value_loss(self.value, mb.x, mb.returns)
                self.value.params = self.opt_v.step(self.value.params, gv)
                losses.append(loss)
                ents.append(parts["entropy"])
                lis.append(parts["l_I"])
                vls.append(vl)
        raw = self.policy(batch.x)
        logp_new, _ = log_prob_head(self.policy.spec, raw, batch.actions)
        kl = float(np.mean(batch.logp_old - logp_new))
        return {"surrogate": float(np.mean(losses)), "entropy": float(np.mean(ents)),
                "l_I_policy": float(np.mean(lis)), "value_loss": float(np.mean(vls)), "kl": kl}
