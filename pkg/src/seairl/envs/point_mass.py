"""2-D point mass visiting goal regions in a scenario-specific order.

Sub-task ``goal_k`` = enter the disc of radius ``RADIUS`` around goal k.
Actions are velocities clipped to the unit box; position moves by
``SPEED * action`` and is confined to [0, 1]^2. Observation (11 values):
position, the three goal centres, and a transient 3-slot instruction lamp
(same convention as the grid).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..errors import ConfigError

SUBTASKS = ("goal_a", "goal_b", "goal_c")
SPEED = 0.05
RADIUS = 0.08
START_LOW, START_HIGH = 0.4, 0.6
GOAL_LOW, GOAL_HIGH = 0.05, 0.95
FIXED_GOALS = ((0.15, 0.15), (0.85, 0.15), (0.5, 0.85))   # under "agent_object" randomization
OBS_DIM = 11


@dataclass(frozen=True)
class PointState:
    pos: tuple[float, float]
    goals: tuple[tuple[float, float], ...]
    scenario: tuple[str, ...]
    stage: int = 0
    flash: bool = True
    t: int = 0
    terminated: bool = False
    truncated: bool = False

    @property
    def active(self) -> str | None:
        return self.scenario[self.stage] if self.stage < len(self.scenario) else None

    @property
    def done(self) -> bool:
        return self.terminated or self.truncated


class PointMassEnv:
    kind = "point_mass_goals"
    discrete = False
    action_dim = 2
    obs_dim = OBS_DIM
    subtasks = SUBTASKS

    def __init__(self, spec):
        self.spec = spec
        for scen in spec.scenarios:
            if not scen or any(s not in SUBTASKS for s in scen):
                raise ConfigError(f"bad point-mass scenario {scen!r}")

    def reset(self, scenario, rng: np.random.Generator) -> PointState:
        scenario = tuple(scenario)
        if scenario not in self.spec.scenarios:
            raise ConfigError(f"unknown scenario {scenario!r}")
        pos = tuple(float(v) for v in rng.uniform(START_LOW, START_HIGH, 2))
        if self.spec.randomization != "all":
            return PointState(pos, FIXED_GOALS, scenario)
        goals = []
        while len(goals) < len(SUBTASKS):
            g = rng.uniform(GOAL_LOW, GOAL_HIGH, 2)
            if (np.hypot(*(g - pos)) > 2 * RADIUS
                    and all(np.hypot(*(g - np.array(h))) > 3 * RADIUS for h in goals)):
                goals.append(tuple(float(v) for v in g))
        return PointState(pos, tuple(goals), scenario)

    def observe(self, state: PointState) -> np.ndarray:
        o = np.zeros(OBS_DIM)
        o[0:2] = state.pos
        o[2:8] = np.ravel(state.goals)
        if state.flash and state.active is not None:
            o[8 + SUBTASKS.index(state.active)] = 1.0
        return o

    def step(self, state: PointState, action):
        if state.done:
            raise ConfigError("step called on a finished episode")
        a = np.clip(np.asarray(action, dtype=np.float64).reshape(2), -1.0, 1.0)
        a = np.nan_to_num(a)
        pos = np.clip(np.array(state.pos) + SPEED * a, 0.0, 1.0)
        stage = state.stage
        goal = np.array(state.goals[SUBTASKS.index(state.active)])
        completed = np.hypot(*(pos - goal)) <= RADIUS
        stage += int(completed)
        t = state.t + 1
        terminated = stage >= len(state.scenario)
        truncated = not terminated and t >= self.spec.episode_cap
        nxt = replace(state, pos=(float(pos[0]), float(pos[1])), stage=stage, flash=bool(completed),
                      t=t, terminated=terminated, truncated=truncated)
        return nxt, float(completed), nxt.done

    def subtask_label(self, state: PointState) -> int:
        return SUBTASKS.index(state.active) if state.active else -1

    def success(self, state: PointState) -> bool:
        return state.terminated

    def expert_action(self, state: PointState, rng=None) -> np.ndarray:
        goal = np.array(state.goals[SUBTASKS.index(state.active)])
        return np.clip((goal - np.array(state.pos)) / SPEED, -1.0, 1.0)

    def encode_action(self, actions) -> np.ndarray:
        return np.asarray(actions, dtype=np.float64).reshape(-1, 2)
