"""5x5 pick-and-place grid with a switch.

Sub-task inventory: ``reach`` (walk to the object, grasp), ``carry`` (walk to
the goal holding the object, release) and ``press`` (walk to the switch,
grasp it). A scenario is an ordering of these. Grasp/release only have an
effect when they complete the currently active sub-task; otherwise they are
no-ops.

Observation (11 values): the agent cell scaled to [0, 1], the offsets from
the agent to the object, goal and switch scaled to [-1, 1], and a 3-slot
instruction lamp. The object is reported at its last
resting cell (it is not redrawn while carried) and there is no holding flag.
The lamp shows the active sub-task only on the step at which it becomes
active (episode start or right after the previous sub-task completes) and is
dark otherwise, so mid-way through a sub-task the observation alone does not
say which one is running; that has to be remembered.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..errors import ConfigError

SUBTASKS = ("reach", "carry", "press")
ACTIONS = ("up", "down", "left", "right", "grasp", "release")
UP, DOWN, LEFT, RIGHT, GRASP, RELEASE = range(6)
_MOVES = {UP: (0, 1), DOWN: (0, -1), LEFT: (-1, 0), RIGHT: (1, 0)}
SIZE = 5
OBS_DIM = 11
FIXED_GOAL, FIXED_SWITCH = (4, 0), (0, 4)   # landmarks under "agent_object" randomization


@dataclass(frozen=True)
class GridState:
    agent: tuple[int, int]
    obj: tuple[int, int]  # last resting cell
    goal: tuple[int, int]
    switch: tuple[int, int]
    scenario: tuple[str, ...]
    stage: int = 0
    holding: bool = False
    flash: bool = True
    t: int = 0
    terminated: bool = False
    truncated: bool = False
    slow: bool = False
    parity: int = 0  # slow expert alternates idle / move

    @property
    def active(self) -> str | None:
        return self.scenario[self.stage] if self.stage < len(self.scenario) else None

    @property
    def done(self) -> bool:
        return self.terminated or self.truncated


class GridEnv:
    kind = "grid_pickup_deliver"
    discrete = True
    n_actions = len(ACTIONS)
    action_dim = len(ACTIONS)
    obs_dim = OBS_DIM
    subtasks = SUBTASKS

    def __init__(self, spec):
        self.spec = spec
        for scen in spec.scenarios:
            if not scen or any(s not in SUBTASKS for s in scen):
                raise ConfigError(f"bad grid scenario {scen!r}")
            if "carry" in scen and ("reach" not in scen or scen.index("reach") > scen.index("carry")):
                raise ConfigError(f"scenario {scen!r} carries before reaching")

    def reset(self, scenario, rng: np.random.Generator) -> GridState:
        scenario = tuple(scenario)
        if scenario not in self.spec.scenarios:
            raise ConfigError(f"unknown scenario {scenario!r}")
        if self.spec.randomization == "all":
            cells = rng.choice(SIZE * SIZE, size=4, replace=False)
            agent, obj, goal, switch = ((int(c) % SIZE, int(c) // SIZE) for c in cells)
        else:
            goal, switch = FIXED_GOAL, FIXED_SWITCH
            free = [c for c in range(SIZE * SIZE) if (c % SIZE, c // SIZE) not in (goal, switch)]
            a, o = rng.choice(free, size=2, replace=False)
            agent, obj = (int(a) % SIZE, int(a) // SIZE), (int(o) % SIZE, int(o) // SIZE)
        return GridState(agent, obj, goal, switch, scenario,
                         slow=scenario in self.spec.slow_scenarios)

    def observe(self, state: GridState) -> np.ndarray:
        o = np.zeros(OBS_DIM)
        agent = np.array(state.agent, dtype=np.float64)
        o[0:2] = agent
        o[2:4] = np.subtract(state.obj, agent)
        o[4:6] = np.subtract(state.goal, agent)
        o[6:8] = np.subtract(state.switch, agent)
        o[:8] /= SIZE - 1
        if state.flash and state.active is not None:
            o[8 + SUBTASKS.index(state.active)] = 1.0
        return o

    def step(self, state: GridState, action) -> tuple[GridState, float, bool]:
        a = int(action)
        if not 0 <= a < len(ACTIONS) or a != action:
            raise IndexError(f"grid action {action!r} out of range")
        if state.done:
            raise ConfigError("step called on a finished episode")
        agent, obj, holding = state.agent, state.obj, state.holding
        stage, active, reward = state.stage, state.active, 0.0
        if a in _MOVES:
            dx, dy = _MOVES[a]
            nx, ny = agent[0] + dx, agent[1] + dy
            if 0 <= nx < SIZE and 0 <= ny < SIZE:
                agent = (nx, ny)
        elif a == GRASP:
            if active == "reach" and agent == obj:
                holding, stage = True, stage + 1
            elif active == "press" and agent == state.switch:
                stage += 1
        elif a == RELEASE:
            if active == "carry" and holding and agent == state.goal:
                holding, obj, stage = False, agent, stage + 1
        completed = stage != state.stage
        if completed:
            reward = 1.0
        t = state.t + 1
        terminated = stage >= len(state.scenario)
        truncated = not terminated and t >= self.spec.episode_cap
        nxt = replace(state, agent=agent, obj=obj, holding=holding, stage=stage, flash=completed,
                      t=t, terminated=terminated, truncated=truncated,
                      parity=state.parity ^ 1 if state.slow else 0)
        return nxt, reward, nxt.done

    def subtask_label(self, state: GridState) -> int:
        """Index of the active sub-task (evaluation only)."""
        return SUBTASKS.index(state.active) if state.active else -1

    def success(self, state: GridState) -> bool:
        return state.terminated

    def expert_action(self, state: GridState, rng: np.random.Generator | None = None) -> int:
        """Move along a shortest path to the active target, then grasp/release.

        When both axes still need moving, the axis is picked by ``rng`` (x
        first without one). Slow scenarios insert a no-op before every move.
        """
        active = state.active
        target = {"reach": state.obj, "carry": state.goal, "press": state.switch}[active]
        if state.agent == target:
            return RELEASE if active == "carry" else GRASP
        if state.slow and state.parity == 0:
            return RELEASE if active != "carry" else GRASP
        dx = target[0] - state.agent[0]
        dy = target[1] - state.agent[1]
        x_move = RIGHT if dx > 0 else LEFT
        y_move = UP if dy > 0 else DOWN
        if dx and dy:
            return x_move if rng is None or rng.random() < 0.5 else y_move
        return x_move if dx else y_move

    def encode_action(self, actions) -> np.ndarray:
        actions = np.asarray(actions, dtype=np.int64)
        return np.eye(len(ACTIONS))[actions]


def navigation_mdp() -> np.ndarray:
    """Agent-position dynamics as a tabular ``P[s, a, s']`` (s = x + SIZE*y).

    Grasp and release leave the position unchanged.
    """
    n = SIZE * SIZE
    P = np.zeros((n, len(ACTIONS), n))
    for s in range(n):
        x, y = s % SIZE, s // SIZE
        for a in range(len(ACTIONS)):
            dx, dy = _MOVES.get(a, (0, 0))
            nx, ny = x + dx, y + dy
            if not (0 <= nx < SIZE and 0 <= ny < SIZE):
                nx, ny = x, y
            P[s, a, nx + SIZE * ny] = 1.0
    return P
