"""Sub-task codes: Gumbel-softmax sampling, the posterior network, VAE
pretraining, pseudo-labelling and the directed-information bonus.

The posterior is Markov: it reads ``(c_prev one-hot, s, a_prev encoding)``
and returns K logits. The episode starts from code 0 and a zero action
encoding.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .approximator import (LOG_FLOOR, Adam, Net, backward, categorical_log_prob, forward,
                           log_softmax, softmax)
from .errors import ConfigError, NumericError
from .policy import log_prob_head

MAX_PERMUTATION_K = 6


def one_hot(index, k: int) -> np.ndarray:
    return np.eye(k)[np.asarray(index, dtype=np.int64)]


def sample_gumbel(shape, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(shape)
    return -np.log(-np.log(np.clip(u, 1e-300, 1.0)) + 1e-300)


def gumbel_softmax(logits, noise, temperature: float) -> np.ndarray:
    """Relaxed sample ``softmax((logits + noise) / temperature)``."""
    if temperature <= 0:
        raise ConfigError("temperature must be positive")
    return softmax((np.asarray(logits) + noise) / temperature)


def gumbel_softmax_vjp(y: np.ndarray, upstream: np.ndarray, temperature: float) -> np.ndarray:
    """Gradient w.r.t. the logits given d(loss)/d(y) for ``y = gumbel_softmax(...)``."""
    inner = (upstream * y).sum(axis=-1, keepdims=True)
    return y * (upstream - inner) / temperature


def gumbel_softmax_sample(logits, temperature: float, hard: bool, rng: np.random.Generator):
    """Draw a code (or a batch of codes) on the simplex.

    With ``hard`` the result is the one-hot of the relaxed sample's argmax;
    callers that need the straight-through gradient use :func:`gumbel_softmax_vjp`
    on the relaxed sample.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if temperature <= 0:
        raise ConfigError("temperature must be positive")
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite logits")
    y = gumbel_softmax(logits, sample_gumbel(logits.shape, rng), temperature)
    if hard:
        return one_hot(y.argmax(axis=-1), logits.shape[-1])
    return y


def kl_to_prior(logits: np.ndarray, prior: np.ndarray | None = None):
    """Exact KL(softmax(logits) || prior) per row, and its gradient w.r.t. logits."""
    logq = log_softmax(logits)
    q = np.exp(logq)
    logp = -np.log(logits.shape[-1]) if prior is None else np.log(prior)
    diff = logq - logp
    kl = (q * diff).sum(axis=-1)
    return kl, q * (diff - kl[..., None])


# ----------------------------------------------------------------------------
# posterior network

def posterior_input(c_prev, s, a_prev_enc, k: int) -> np.ndarray:
    c_prev = np.asarray(c_prev)
    if c_prev.dtype.kind in "iu":
        c_prev = one_hot(c_prev, k)
    return np.concatenate([c_prev, np.asarray(s, dtype=np.float64),
                           np.asarray(a_prev_enc, dtype=np.float64)], axis=-1)


def n_codes(posterior: Net) -> int:
    return posterior.spec.out_dim


def posterior_forward(posterior: Net, c_prev, s, a_prev_enc) -> np.ndarray:
    return posterior(posterior_input(c_prev, s, a_prev_enc, n_codes(posterior)))


def posterior_bonus(posterior: Net, c, c_prev, s, a_prev_enc) -> np.ndarray:
    """log Q(c | c_prev, s, a_prev), floored at ``LOG_FLOOR``."""
    logits = posterior_forward(posterior, c_prev, s, a_prev_enc)
    return np.maximum(categorical_log_prob(logits, c), LOG_FLOOR)


def _padded(trajectories, encode_action):
    """Time-major padded arrays: states (N, L+1, d), encoded actions (N, L, da), lengths."""
    lengths = np.array([len(t) for t in trajectories])
    n, L = len(trajectories), int(lengths.max())
    d = trajectories[0].states.shape[1]
    states = np.zeros((n, L + 1, d))
    a_enc = None
    for i, tr in enumerate(trajectories):
        states[i, :lengths[i] + 1] = tr.states
        enc = encode_action(tr.actions)
        if a_enc is None:
            a_enc = np.zeros((n, L, enc.shape[1]))
        a_enc[i, :lengths[i]] = enc
    return states, a_enc, lengths


def pseudo_label_batch(posterior: Net, trajectories, encode_action, mode="argmax", rng=None,
                       include_next=False):
    """Roll the posterior along each trajectory. Returns a list of code arrays
    of length T (or T+1 with ``include_next``, the extra code being c_next of
    the last transition)."""
    if mode not in ("argmax", "sample"):
        raise ConfigError(f"unknown pseudo-label mode {mode!r}")
    k = n_codes(posterior)
    states, a_enc, lengths = _padded(trajectories, encode_action)
    n, L = a_enc.shape[:2]
    codes = np.zeros((n, L + 1), dtype=np.int64)
    c_prev = np.zeros(n, dtype=np.int64)
    a_prev = np.zeros((n, a_enc.shape[2]))
    steps = L + 1 if include_next else L
    for t in range(steps):
        logits = posterior_forward(posterior, c_prev, states[:, t], a_prev)
        if mode == "argmax":
            c = logits.argmax(axis=-1)
        else:
            c = (logits + sample_gumbel(logits.shape, rng)).argmax(axis=-1)
        codes[:, t] = c
        c_prev = c
        if t < L:
            a_prev = a_enc[:, t]
    extra = 1 if include_next else 0
    return [codes[i, :lengths[i] + extra].copy() for i in range(n)]


def pseudo_label(posterior: Net, trajectory, encode_action, mode="argmax", rng=None,
                 include_next=False) -> np.ndarray:
    return pseudo_label_batch(posterior, [trajectory], encode_action, mode, rng, include_next)[0]


def segmentation_accuracy(pred, truth) -> float:
    """Best agreement fraction over all relabellings of the predicted codes."""
    pred, truth = np.asarray(pred, dtype=np.int64), np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape:
        raise ConfigError("prediction and ground truth lengths differ")
    if pred.size == 0:
        return 1.0
    k = int(max(pred.max(), truth.max())) + 1
    if k > MAX_PERMUTATION_K:
        raise ConfigError(f"{k} labels: permutation search is capped at {MAX_PERMUTATION_K}; "
                          "use a Hungarian matching instead")
    table = np.zeros((k, k), dtype=np.int64)
    np.add.at(table, (pred, truth), 1)
    best = max(table[np.arange(k), perm].sum() for perm in itertools.permutations(range(k)))
    return best / pred.size


# ----------------------------------------------------------------------------
# VAE pretraining

@dataclass
class VaeBatch:
    states: np.ndarray     # (N, L+1, d)
    a_enc: np.ndarray      # (N, L, da)
    actions: np.ndarray    # (N, L) int or (N, L, da) float
    mask: np.ndarray       # (N, L)


def make_vae_batch(trajectories, encode_action) -> VaeBatch:
    states, a_enc, lengths = _padded(trajectories, encode_action)
    n, L = a_enc.shape[:2]
    mask = np.arange(L)[None, :] < lengths[:, None]
    if trajectories[0].actions.ndim == 1:
        actions = np.zeros((n, L), dtype=np.int64)
    else:
        actions = np.zeros((n, L, trajectories[0].actions.shape[1]))
    for i, tr in enumerate(trajectories):
        actions[i, :lengths[i]] = tr.actions
    return VaeBatch(states, a_enc, actions, mask.astype(np.float64))


def policy_log_prob_and_grad(policy: Net, x, actions):
    """log pi(a|x) per row, and a closure mapping d(loss)/d(logp) to
    (param grads, input grads)."""
    raw, tape = forward(policy.spec, policy.params, x)
    logp, dlogp_draw = log_prob_head(policy.spec, raw, actions)

    def vjp(g_logp):
        return backward(tape, dlogp_draw(g_logp))
    return logp, vjp


def vae_loss(policy: Net, posterior: Net, batch: VaeBatch, noise: np.ndarray, temperature: float,
             lambda_kl: float, stickiness: float = 0.0):
    """Mean over real steps of ``-log pi(a|s,y_t) + lambda_kl * KL(Q_t || prior_t)``.

    ``y_t`` is the relaxed Gumbel-softmax code and is also the previous-code
    input of the posterior at t+1, so gradients run back through the whole
    code chain (a code chosen at the lamp step is credited for every later
    step that reuses it). Returns ``(loss, policy grad, posterior grad,
    reconstruction part)``.

    ``prior_t`` is uniform at t=0 and afterwards ``sticky_prior`` of the
    previous code; ``stickiness=0`` gives the plain uniform prior.
    """
    k = n_codes(posterior)
    n, L = batch.mask.shape
    total = batch.mask.sum()
    c_prev = np.tile(one_hot(0, k), (n, 1))
    a_prev = np.zeros((n, batch.a_enc.shape[2]))
    loss = recon = 0.0
    steps = []
    for t in range(L):
        m = batch.mask[:, t]
        if not m.any():
            break
        x_q = np.concatenate([c_prev, batch.states[:, t], a_prev], axis=1)
        logits, tape_q = forward(posterior.spec, posterior.params, x_q)
        y = gumbel_softmax(logits, noise[:, t], temperature)
        logp, vjp = policy_log_prob_and_grad(
            policy, np.concatenate([batch.states[:, t], y], axis=1), batch.actions[:, t])
        kl, dkl = kl_to_prior(logits, sticky_prior(c_prev, stickiness) if t else None)
        recon -= (m * logp).sum()
        loss += -(m * logp).sum() + lambda_kl * (m * kl).sum()
        steps.append((m, tape_q, y, vjp, dkl))
        c_prev = y
        a_prev = batch.a_enc[:, t]
    g_pol = np.zeros_like(policy.params)
    g_post = np.zeros_like(posterior.params)
    carry = np.zeros((n, k))
    for m, tape_q, y, vjp, dkl in reversed(steps):
        gp, gin = vjp(-m / total)
        g_pol += gp
        dlogits = (gumbel_softmax_vjp(y, gin[:, -k:] + carry, temperature)
                   + lambda_kl * (m / total)[:, None] * dkl)
        gq, gin_q = backward(tape_q, dlogits)
        g_post += gq
        carry = gin_q[:, :k]
    return loss / total, g_pol, g_post, recon / total


def sticky_prior(c_prev: np.ndarray, stickiness: float) -> np.ndarray:
    """Per-row prior keeping the previous (hard) code with extra mass ``stickiness``."""
    k = c_prev.shape[-1]
    return stickiness * one_hot(c_prev.argmax(axis=-1), k) + (1.0 - stickiness) / k


def mean_code_reconstruction(policy: Net, posterior: Net, batch: VaeBatch) -> float:
    """Noise-free reconstruction: codes are the posterior's softmax, no sampling."""
    k = n_codes(posterior)
    n, L = batch.mask.shape
    c_prev = np.zeros(n, dtype=np.int64)
    a_prev = np.zeros((n, batch.a_enc.shape[2]))
    total = 0.0
    for t in range(L):
        rows = batch.mask[:, t] > 0
        if not rows.any():
            break
        logits = posterior(posterior_input(c_prev[rows], batch.states[rows, t], a_prev[rows], k))
        y = softmax(logits)
        raw = policy(np.concatenate([batch.states[rows, t], y], axis=1))
        total -= log_prob_head(policy.spec, raw, batch.actions[rows, t])[0].sum()
        nxt = c_prev.copy()
        nxt[rows] = logits.argmax(axis=1)
        c_prev = nxt
        a_prev = batch.a_enc[:, t]
    return total / batch.mask.sum()


@dataclass
class PretrainTrace:
    loss: list
    reconstruction: list
    mean_code_reconstruction: list
    temperature: list


def temperature_schedule(epoch: int, epochs: int, start: float = 1.0, end: float = 0.3) -> float:
    if epochs <= 1:
        return start
    return start * (end / start) ** (epoch / (epochs - 1))


def pretrain_posterior_vae(demos, encode_action, policy: Net, posterior: Net, epochs: int,
                           rng: np.random.Generator, lr=1e-3, lambda_kl=0.1, temp_start=1.0,
                           temp_end=0.3, batch_trajectories=32, record_mean=False,
                           stickiness=0.95):
    """Train the posterior (encoder) and the policy (decoder) on unlabeled demos.

    Returns ``(posterior, warm policy, trace)``; inputs are not modified.
    """
    trajs = demos.trajectories if hasattr(demos, "trajectories") else list(demos)
    if not trajs:
        raise ConfigError("no demonstrations to pretrain on")
    policy, posterior = policy.copy(), posterior.copy()
    opt_pol, opt_post = Adam(policy.params.size, lr), Adam(posterior.params.size, lr)
    k = n_codes(posterior)
    trace = PretrainTrace([], [], [], [])
    full = make_vae_batch(trajs, encode_action)
    for epoch in range(epochs):
        tau = temperature_schedule(epoch, epochs, temp_start, temp_end)
        order = rng.permutation(len(trajs))
        ep_loss = ep_recon = 0.0
        for start in range(0, len(trajs), batch_trajectories):
            idx = order[start:start + batch_trajectories]
            batch = VaeBatch(full.states[idx], full.a_enc[idx], full.actions[idx], full.mask[idx])
            noise = sample_gumbel(batch.mask.shape + (k,), rng)
            loss, gp, gq, recon = vae_loss(policy, posterior, batch, noise, tau, lambda_kl, stickiness)
            if not np.isfinite(loss):
                raise NumericError(f"VAE pretraining diverged at epoch {epoch}")
            policy.params = opt_pol.step(policy.params, gp)
            posterior.params = opt_post.step(posterior.params, gq)
            w = len(idx) / len(trajs)
            ep_loss += w * loss
            ep_recon += w * recon
        trace.loss.append(ep_loss)
        trace.reconstruction.append(ep_recon)
        trace.temperature.append(tau)
        if record_mean:
            trace.mean_code_reconstruction.append(mean_code_reconstruction(policy, posterior, full))
    return posterior, policy, trace


# ----------------------------------------------------------------------------
# directed information on an enumerable process

@dataclass
class CodeProcess:
    """Binary states/actions/codes over a short horizon.

    ``p_s1[s]``, ``p_code[c_prev, s, c]`` (c_prev = 0 at t=1), ``policy[s, c, a]``,
    ``dynamics[s, a, s']``.
    """

    p_s1: np.ndarray
    p_code: np.ndarray
    policy: np.ndarray
    dynamics: np.ndarray
    horizon: int = 3

    @classmethod
    def random(cls, rng: np.random.Generator, horizon: int = 3) -> "CodeProcess":
        def simplex(*shape):
            x = rng.dirichlet(np.ones(2), size=shape)
            return x
        return cls(rng.dirichlet(np.ones(2)), simplex(2, 2), simplex(2, 2), simplex(2, 2), horizon)

    def outcomes(self):
        """Yield (probability, states, codes, actions) for every full sequence."""
        T = self.horizon
        for seq in itertools.product(range(2), repeat=3 * T - 1):
            s = seq[0::3]
            c = seq[1::3]
            a = seq[2::3]
            p = self.p_s1[s[0]]
            c_prev = 0
            for t in range(T):
                p *= self.p_code[c_prev, s[t], c[t]]
                if t < T - 1:
                    p *= self.policy[s[t], c[t], a[t]] * self.dynamics[s[t], a[t], s[t + 1]]
                c_prev = c[t]
            yield p, s, c, a


def _entropy_of(joint: dict) -> float:
    p = np.array(list(joint.values()))
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def _marginal(outcomes, key):
    out: dict = {}
    for p, s, c, a in outcomes:
        k = key(s, c, a)
        out[k] = out.get(k, 0.0) + p
    return out


def directed_information_exact(process: CodeProcess) -> tuple[float, float]:
    """(I(tau -> c), H(c_1:T)) by enumeration, in nats.

    I(tau -> c) = sum_t I(c_t ; tau_1:t | c_1:t-1), tau_1:t = (s_1, a_1, ..., s_t).
    """
    outs = list(process.outcomes())
    T = process.horizon
    info = 0.0
    for t in range(T):
        h = lambda joint_key, cond_key: (_entropy_of(_marginal(outs, joint_key))
                                         - _entropy_of(_marginal(outs, cond_key)))
        h_c = h(lambda s, c, a: c[:t + 1], lambda s, c, a: c[:t])
        h_c_tau = h(lambda s, c, a: (c[:t + 1], s[:t + 1], a[:t]),
                    lambda s, c, a: (c[:t], s[:t + 1], a[:t]))
        info += h_c - h_c_tau
    h_codes = _entropy_of(_marginal(outs, lambda s, c, a: c))
    return info, h_codes


def lq_exact(process: CodeProcess, q_table: np.ndarray) -> float:
    """L_q for a Markov posterior table ``q_table[t_is_first, c_prev, s, a_prev, c]``."""
    _, h_codes = directed_information_exact(process)
    total = 0.0
    for p, s, c, a in process.outcomes():
        total += p * _log_q_sequence(q_table, s, c, a)
    return total + h_codes


def lq_monte_carlo(process: CodeProcess, q_table: np.ndarray, n: int, rng) -> tuple[float, float]:
    """Sampled estimate of L_q and its standard error."""
    outs = list(process.outcomes())
    probs = np.array([o[0] for o in outs])
    idx = rng.choice(len(outs), size=n, p=probs / probs.sum())
    vals = np.array([_log_q_sequence(q_table, *outs[i][1:]) for i in idx])
    _, h_codes = directed_information_exact(process)
    return float(vals.mean() + h_codes), float(vals.std(ddof=1) / np.sqrt(n))


def _log_q_sequence(q_table, s, c, a) -> float:
    total, c_prev, a_prev = 0.0, 0, 0
    for t in range(len(c)):
        total += np.log(q_table[int(t == 0), c_prev, s[t], a_prev, c[t]])
        c_prev = c[t]
        if t < len(a):
            a_prev = a[t]
    return total
