"""Vectorised episode collection for the hierarchical policy, and evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .approximator import Net
from .envs import EvalView, Trajectory, scenario_id
from .errors import SeairlError
from .latent import posterior_input
from .policy import greedy_head, sample_head
from .approximator import log_softmax


class RolloutError(SeairlError, RuntimeError):
    category = "runtime"


class LearnedAgent:
    """Policy ``pi(a | s, c)`` driven by codes from a posterior ``Q(c | c_prev, s, a_prev)``.

    With ``posterior=None`` the agent runs on one constant code.
    """

    def __init__(self, policy: Net, posterior: Net | None, n_codes: int, encode_action):
        self.policy, self.posterior, self.k = policy, posterior, n_codes
        self.encode_action = encode_action

    def codes(self, obs, c_prev, a_prev_enc, rng, greedy):
        n = len(obs)
        if self.posterior is None or self.k == 1:
            return np.zeros(n, dtype=np.int64), np.zeros(n)
        logits = self.posterior(posterior_input(c_prev, obs, a_prev_enc, self.k))
        logq_all = log_softmax(logits)
        if greedy:
            c = logits.argmax(axis=1)
        else:
            c = (rng.random((n, 1)) > np.cumsum(np.exp(logq_all), axis=1)).sum(axis=1)
            c = np.minimum(c, self.k - 1)
        return c, logq_all[np.arange(n), c]

    def actions(self, obs, codes, rng, greedy, states=None):
        raw = self.policy(np.concatenate([obs, np.eye(self.k)[codes]], axis=1))
        if greedy:
            return greedy_head(self.policy.spec, raw), np.zeros(len(obs))
        return sample_head(self.policy.spec, raw, rng)


class ScriptedAgent:
    """Expert (``kind='expert'``) or uniform random (``kind='random'``) actions."""

    def __init__(self, env, kind: str = "expert"):
        self.env, self.kind, self.k = env, kind, 1
        self.encode_action = env.encode_action

    def codes(self, obs, c_prev, a_prev_enc, rng, greedy):
        return np.zeros(len(obs), dtype=np.int64), np.zeros(len(obs))

    def actions(self, obs, codes, rng, greedy, states=None):
        n = len(obs)
        if self.kind == "expert":
            acts = [self.env.expert_action(st, rng) for st in states]
        elif self.env.discrete:
            acts = list(rng.integers(self.env.n_actions, size=n))
        else:
            acts = list(rng.uniform(-1.0, 1.0, size=(n, self.env.action_dim)))
        return np.array(acts), np.zeros(n)


@dataclass
class _Episode:
    scenario: tuple
    state: object
    obs: list
    acts: list
    codes: list
    log_pi: list
    log_q: list
    rews: list
    subs: list


def _step_env(env, state, action, counter):
    try:
        return env.step(state, action)
    except SeairlError:
        raise
    except Exception as exc:  # noqa: BLE001 - any env failure aborts the run
        raise RolloutError(f"environment fault at step {counter}: {exc}") from exc


def _finish(ep: _Episode, last_code: int, terminated: bool, discrete: bool) -> Trajectory:
    dtype = np.int64 if discrete else np.float64
    return Trajectory(np.array(ep.obs), np.array(ep.acts, dtype=dtype), scenario_id(ep.scenario),
                      terminated, EvalView(np.array(ep.rews, dtype=np.float64),
                                           np.array(ep.subs, dtype=np.int64)),
                      codes=np.array(ep.codes + [last_code], dtype=np.int64),
                      log_pi=np.array(ep.log_pi), log_q=np.array(ep.log_q))


def run_vectorised(env, agent, rng: np.random.Generator, *, n_envs: int, step_budget=None,
                   scenarios=None, greedy=False) -> list[Trajectory]:
    """Run ``n_envs`` environments side by side.

    With ``step_budget`` each environment keeps resetting until its share of
    the budget is spent (the last segment may be cut short and is then not
    terminated). With ``scenarios`` (one per environment) each environment
    plays exactly one episode of that scenario.
    """
    if scenarios is not None:
        n_envs = len(scenarios)
    if step_budget is not None:
        share = np.full(n_envs, step_budget // n_envs)
        share[: step_budget % n_envs] += 1
    else:
        share = np.full(n_envs, np.iinfo(np.int64).max)
    all_scen = env.spec.scenarios
    a_dim = agent.encode_action(np.zeros(1, dtype=np.int64) if env.discrete
                                else np.zeros((1, env.action_dim))).shape[1]

    def new_episode(i):
        scen = scenarios[i] if scenarios is not None else all_scen[rng.integers(len(all_scen))]
        st = env.reset(scen, rng)
        return _Episode(scen, st, [env.observe(st)], [], [], [], [], [], [])

    eps = [new_episode(i) for i in range(n_envs)]
    used = np.zeros(n_envs, dtype=np.int64)
    c_prev = np.zeros(n_envs, dtype=np.int64)
    a_prev = np.zeros((n_envs, a_dim))
    live = np.ones(n_envs, dtype=bool)
    out: list[tuple[int, int, Trajectory]] = []
    order = 0
    counter = 0
    while live.any():
        idx = np.flatnonzero(live)
        obs = np.array([eps[i].obs[-1] for i in idx])
        codes, logq = agent.codes(obs, c_prev[idx], a_prev[idx], rng, greedy)
        acts, logp = agent.actions(obs, codes, rng, greedy, states=[eps[i].state for i in idx])
        closing = []
        for j, i in enumerate(idx):
            ep = eps[i]
            a = int(acts[j]) if env.discrete else np.asarray(acts[j], dtype=np.float64)
            ep.subs.append(env.subtask_label(ep.state))
            nxt, r, done = _step_env(env, ep.state, a, counter)
            counter += 1
            used[i] += 1
            ep.state = nxt
            ep.obs.append(env.observe(nxt))
            ep.acts.append(a)
            ep.codes.append(int(codes[j]))
            ep.log_pi.append(float(logp[j]))
            ep.log_q.append(float(logq[j]))
            ep.rews.append(r)
            if done or used[i] >= share[i]:
                closing.append(j)
        c_prev[idx] = codes
        a_prev[idx] = agent.encode_action(acts)
        if closing:
            cj = np.array(closing)
            ci = idx[cj]
            last_obs = np.array([eps[i].obs[-1] for i in ci])
            last_codes, _ = agent.codes(last_obs, c_prev[ci], a_prev[ci], rng, greedy)
            for i, lc in zip(ci, last_codes):
                ep = eps[i]
                out.append((i, order, _finish(ep, int(lc), bool(ep.state.terminated), env.discrete)))
                order += 1
                if scenarios is None and used[i] < share[i]:
                    eps[i] = new_episode(i)
                    c_prev[i] = 0
                    a_prev[i] = 0.0
                else:
                    live[i] = False
    out.sort(key=lambda t: (t[0], t[1]))
    return [t[2] for t in out]


def collect_rollouts(agent, env, n_steps: int, rng: np.random.Generator, n_envs: int = 32):
    """Exactly ``n_steps`` sampled transitions, grouped into trajectories."""
    return run_vectorised(env, agent, rng, n_envs=min(n_envs, n_steps), step_budget=n_steps)


def evaluate(agent, env, episodes: int, rng: np.random.Generator, scenarios=None) -> dict:
    """Greedy evaluation with the true environment reward.

    Scenarios are assigned round-robin over ``scenarios`` (default: all of the
    env's). Returns overall and per-scenario success rates, mean return and
    mean episode length.
    """
    if episodes < 1:
        raise ValueError("evaluation needs at least one episode")
    scen = list(scenarios or env.spec.scenarios)
    plan = [scen[i % len(scen)] for i in range(episodes)]
    trajs = run_vectorised(env, agent, rng, n_envs=episodes, scenarios=plan, greedy=True)
    per: dict = {}
    for tr in trajs:
        per.setdefault(tr.scenario, []).append(float(tr.terminated))
    return {
        "success_rate": float(np.mean([tr.terminated for tr in trajs])),
        "per_scenario": {k: float(np.mean(v)) for k, v in per.items()},
        "mean_return": float(np.mean([tr.eval_only.rewards.sum() for tr in trajs])),
        "mean_length": float(np.mean([len(tr) for tr in trajs])),
    }
