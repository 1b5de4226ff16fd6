"""Toy multi-task environments, trajectories and demonstration files."""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from ..errors import ConfigError, FormatError
from .grid import GridEnv
from .point_mass import PointMassEnv

DEMO_SCHEMA = "seairl-demos/1"
LABEL_SCHEMA = "seairl-labels/1"
# "agent_object": only the agent start and the first target move between
# episodes; "all": every landmark is placed at random.
RANDOMIZATIONS = ("agent_object", "all")

GRID_TRAIN = (("reach", "carry"), ("press", "reach", "carry"))
GRID_TRANSFER = (("reach", "carry", "press"), ("reach", "press", "carry"))
POINT_TRAIN = (("goal_a", "goal_b"), ("goal_c", "goal_a", "goal_b"))
POINT_TRANSFER = (("goal_a", "goal_b", "goal_c"), ("goal_a", "goal_c", "goal_b"))


@dataclass(frozen=True)
class EnvSpec:
    kind: str = "grid_pickup_deliver"
    scenarios: tuple = GRID_TRAIN
    episode_cap: int = 64
    slow_scenarios: tuple = ()
    randomization: str = "agent_object"   # which initial placements are drawn from the rng

    def __post_init__(self):
        object.__setattr__(self, "scenarios", tuple(tuple(s) for s in self.scenarios))
        object.__setattr__(self, "slow_scenarios", tuple(tuple(s) for s in self.slow_scenarios))
        if self.kind not in ("grid_pickup_deliver", "point_mass_goals"):
            raise ConfigError(f"unknown env kind {self.kind!r}")
        if not self.scenarios:
            raise ConfigError("scenario set is empty")
        if self.episode_cap < 1:
            raise ConfigError("episode_cap must be positive")
        if self.randomization not in RANDOMIZATIONS:
            raise ConfigError(f"randomization must be one of {RANDOMIZATIONS}")

    @property
    def fingerprint(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_scenarios(self, scenarios, slow=()) -> "EnvSpec":
        return EnvSpec(self.kind, scenarios, self.episode_cap, slow, self.randomization)


def grid_spec(scenarios=GRID_TRAIN, slow=(), randomization="agent_object") -> EnvSpec:
    return EnvSpec("grid_pickup_deliver", scenarios, 64, slow, randomization)


def point_mass_spec(scenarios=POINT_TRAIN, randomization="agent_object") -> EnvSpec:
    return EnvSpec("point_mass_goals", scenarios, 128, (), randomization)


def make_env(spec: EnvSpec):
    return GridEnv(spec) if spec.kind == "grid_pickup_deliver" else PointMassEnv(spec)


def scenario_id(scenario) -> str:
    return "-".join(scenario)


def parse_scenario(text: str) -> tuple[str, ...]:
    return tuple(text.split("-"))


def reset(env, scenario, rng):
    return env.reset(scenario, rng)


def step(env, state, action):
    return env.step(state, action)


def scripted_expert(env, state, scenario=None, rng=None):
    return env.expert_action(state, rng)


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: object
    c: Optional[int]
    s_next: np.ndarray
    c_next: Optional[int]
    log_pi: float
    done: bool


@dataclass(frozen=True)
class EvalView:
    """Evaluation-only data; no learner loss reads this."""

    rewards: np.ndarray
    subtasks: np.ndarray


@dataclass
class Trajectory:
    """One episode segment. ``states`` has T+1 rows so chaining holds by construction."""

    states: np.ndarray
    actions: np.ndarray
    scenario: str
    terminated: bool
    eval_only: EvalView
    codes: Optional[np.ndarray] = None   # T+1 code indices; codes[T] is c_next of the last step
    log_pi: Optional[np.ndarray] = None
    log_q: Optional[np.ndarray] = None   # posterior log-prob of codes[t], t < T

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def truncated(self) -> bool:
        return not self.terminated

    def transitions(self) -> Iterator[Transition]:
        T = len(self)
        for t in range(T):
            yield Transition(
                self.states[t], self.actions[t],
                None if self.codes is None else int(self.codes[t]),
                self.states[t + 1],
                None if self.codes is None else int(self.codes[t + 1]),
                0.0 if self.log_pi is None else float(self.log_pi[t]),
                self.terminated and t == T - 1)


@dataclass
class DemoSet:
    trajectories: list
    env_fingerprint: str
    seed: int
    labels: dict = field(default_factory=dict)  # trajectory index -> code sequence

    def __post_init__(self):
        if not self.trajectories:
            raise ConfigError("demo set is empty")

    @property
    def n_transitions(self) -> int:
        return sum(len(t) for t in self.trajectories)


def run_episode(env, scenario, rng, policy) -> Trajectory:
    """Roll ``policy(state) -> action`` from a reset until the episode ends."""
    state = env.reset(scenario, rng)
    obs, acts, rews, subs = [env.observe(state)], [], [], []
    while not state.done:
        a = policy(state)
        subs.append(env.subtask_label(state))
        state, r, _ = env.step(state, a)
        obs.append(env.observe(state))
        acts.append(a)
        rews.append(r)
    actions = np.array(acts, dtype=np.int64) if env.discrete else np.array(acts, dtype=np.float64)
    return Trajectory(np.array(obs), actions, scenario_id(scenario), state.terminated,
                      EvalView(np.array(rews), np.array(subs, dtype=np.int64)))


def record_demos(env, n_per_scenario: int, seed: int) -> DemoSet:
    if n_per_scenario < 1:
        raise ConfigError("n_per_scenario must be >= 1")
    rng = np.random.default_rng(seed)
    trajs = []
    for scen in env.spec.scenarios:
        for _ in range(n_per_scenario):
            trajs.append(run_episode(env, scen, rng, lambda st: env.expert_action(st, rng)))
    return DemoSet(trajs, env.spec.fingerprint, seed)


# ----------------------------------------------------------------------------
# demo file: JSON header line, then one JSON array per transition in the order
# [trajectory, t, scenario, s, a, s_next, done, terminated, env_reward, subtask]
# optionally followed by a labels section: header line, then [trajectory, codes]

def _encode_action(a):
    return a.tolist() if isinstance(a, np.ndarray) else int(a)


def save_demos(demos: DemoSet, path) -> None:
    lines = [json.dumps({"schema": DEMO_SCHEMA, "env_fingerprint": demos.env_fingerprint,
                         "seed": demos.seed})]
    for i, tr in enumerate(demos.trajectories):
        T = len(tr)
        for t in range(T):
            lines.append(json.dumps([
                i, t, tr.scenario, tr.states[t].tolist(), _encode_action(tr.actions[t]),
                tr.states[t + 1].tolist(), t == T - 1, bool(tr.terminated and t == T - 1),
                float(tr.eval_only.rewards[t]), int(tr.eval_only.subtasks[t])]))
    if demos.labels:
        lines.append(json.dumps({"section": "labels", "schema": LABEL_SCHEMA}))
        for i in sorted(demos.labels):
            lines.append(json.dumps([i, [int(c) for c in demos.labels[i]]]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_demos(path, env_spec: EnvSpec | None = None) -> DemoSet:
    text = Path(path).read_text()
    rows = text.splitlines()
    try:
        header = json.loads(rows[0])
        if header.get("schema") != DEMO_SCHEMA:
            raise ValueError("schema")
    except (IndexError, ValueError, AttributeError):
        raise FormatError(f"{path}: line 1: missing or bad demo header") from None
    if env_spec is not None and env_spec.fingerprint != header["env_fingerprint"]:
        warnings.warn(f"demo fingerprint {header['env_fingerprint']} does not match "
                      f"environment {env_spec.fingerprint}", stacklevel=2)
    groups: dict[int, list] = {}
    labels = {}
    in_labels = False
    for lineno, raw in enumerate(rows[1:], start=2):
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
            if isinstance(rec, dict):
                if rec.get("section") != "labels" or rec.get("schema") != LABEL_SCHEMA:
                    raise ValueError("unknown section")
                in_labels = True
                continue
            if in_labels:
                idx, codes = rec
                labels[int(idx)] = np.array(codes, dtype=np.int64)
                continue
            idx, t, scen, s, a, s_next, done, term, rew, sub = rec
            grp = groups.setdefault(int(idx), [])
            if t != len(grp):
                raise ValueError(f"step index {t} out of order")
            if grp and grp[-1][5] != s:
                raise ValueError("transition does not chain to the previous one")
            grp.append(rec)
        except (ValueError, TypeError) as exc:
            raise FormatError(f"{path}: line {lineno}: bad record ({exc})") from None
    trajs = []
    for idx in sorted(groups):
        recs = groups[idx]
        states = np.array([r[3] for r in recs] + [recs[-1][5]], dtype=np.float64)
        acts = [r[4] for r in recs]
        actions = (np.array(acts, dtype=np.float64) if isinstance(acts[0], list)
                   else np.array(acts, dtype=np.int64))
        trajs.append(Trajectory(states, actions, recs[0][2], bool(recs[-1][7]),
                                EvalView(np.array([r[8] for r in recs], dtype=np.float64),
                                         np.array([r[9] for r in recs], dtype=np.int64))))
    if not trajs:
        raise FormatError(f"{path}: no transitions")
    return DemoSet(trajs, header["env_fingerprint"], int(header["seed"]), labels)
