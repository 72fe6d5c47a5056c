"""Corridor spread: a tiny temporally extended coordination task.

N agents live on a line of L cells and must spread out so that at the
final tick every goal cell holds exactly one agent. Sight is limited to
a window of radius R, so positioning requires implicit coordination.
Actions: 0 = left, 1 = stay, 2 = right; moves clamp at the walls. Every
step costs step_penalty; at the horizon each goal covered by exactly one
agent pays 1/N. The optimal return is 1 - horizon*step_penalty whenever
the goals are reachable in time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, UsageError
from .base import Env, EnvSpec, ObservationSet, StepOutcome

LEFT, STAY, RIGHT = 0, 1, 2
_MOVES = np.array([-1, 0, +1])


def default_goals(length, n_agents):
    """Evenly spread goal cells, endpoints included."""
    return tuple(int(round(x)) for x in np.linspace(0, length - 1, n_agents))


@dataclass(frozen=True)
class CorridorSpreadDef:
    length: int = 7
    n_agents: int = 3
    sight_range: int = 1
    horizon: int = 10
    step_penalty: float = 0.01
    goals: tuple = None
    start_positions: tuple = None  # None: random distinct cells per reset

    def __post_init__(self):
        if self.length < 2:
            raise ConfigurationError("corridor needs at least two cells")
        if not 1 <= self.n_agents <= self.length:
            raise ConfigurationError("need 1 <= n_agents <= length for distinct placement")
        if self.sight_range < 0:
            raise ConfigurationError("sight_range must be non-negative")
        if self.horizon < 1:
            raise ConfigurationError("horizon must be positive")
        goals = self.goals if self.goals is not None else default_goals(self.length, self.n_agents)
        goals = tuple(int(g) for g in goals)
        if len(goals) != self.n_agents or len(set(goals)) != len(goals):
            raise ConfigurationError("goals must be one distinct cell per agent")
        if min(goals) < 0 or max(goals) >= self.length:
            raise ConfigurationError("goal outside the corridor")
        object.__setattr__(self, "goals", goals)
        if self.start_positions is not None:
            starts = tuple(int(p) for p in self.start_positions)
            if len(starts) != self.n_agents or len(set(starts)) != len(starts):
                raise ConfigurationError("start positions must be one distinct cell per agent")
            if min(starts) < 0 or max(starts) >= self.length:
                raise ConfigurationError("start position outside the corridor")
            object.__setattr__(self, "start_positions", starts)


class CorridorSpreadEnv(Env):
    def __init__(self, definition):
        d = definition
        self.definition = d
        window = 2 * d.sight_range + 1
        # obs: own position (scaled), time fraction, occupancy window,
        # goal window, agent one-hot
        obs_dim = 2 + 2 * window + d.n_agents
        self.spec = EnvSpec(
            n_agents=d.n_agents,
            n_actions=3,
            obs_dim=obs_dim,
            state_dim=2 * d.length + 1,
            episode_limit=d.horizon,
        )
        self.optimal_return = 1.0 - d.horizon * d.step_penalty
        self._goal_mask = np.zeros(d.length)
        self._goal_mask[list(d.goals)] = 1.0
        self._avail = np.ones((d.n_agents, 3), dtype=bool)
        self._positions = None
        self._t = 0
        self._done = True

    def reset(self, seed):
        d = self.definition
        if d.start_positions is not None:
            self._positions = np.array(d.start_positions, dtype=np.int64)
        else:
            rng = np.random.default_rng(seed)
            self._positions = rng.choice(d.length, size=d.n_agents, replace=False)
        self._t = 0
        self._done = False
        return self._state(), self._observations()

    def _occupancy(self):
        counts = np.zeros(self.definition.length)
        np.add.at(counts, self._positions, 1.0)
        return counts

    def _state(self):
        t_frac = self._t / self.definition.horizon
        return np.concatenate([self._occupancy(), self._goal_mask, [t_frac]])

    def _observations(self):
        d = self.definition
        window = 2 * d.sight_range + 1
        occupancy = self._occupancy()
        obs = np.empty((d.n_agents, self.spec.obs_dim))
        t_frac = self._t / d.horizon
        for i, pos in enumerate(self._positions):
            cells = np.arange(pos - d.sight_range, pos + d.sight_range + 1)
            inside = (cells >= 0) & (cells < d.length)
            occ_win = np.full(window, -1.0)
            goal_win = np.full(window, -1.0)
            occ_win[inside] = occupancy[cells[inside]]
            goal_win[inside] = self._goal_mask[cells[inside]]
            one_hot = np.zeros(d.n_agents)
            one_hot[i] = 1.0
            obs[i] = np.concatenate([[pos / (d.length - 1), t_frac], occ_win, goal_win, one_hot])
        return ObservationSet(obs=obs, avail=self._avail.copy())

    def step(self, actions):
        if self._done:
            raise UsageError("step called on a finished episode; reset first")
        d = self.definition
        actions = self.check_actions(actions, self._avail)
        self._positions = np.clip(self._positions + _MOVES[actions], 0, d.length - 1)
        self._t += 1
        reward = -d.step_penalty
        terminated = self._t >= d.horizon
        if terminated:
            occupancy = self._occupancy()
            covered = sum(1 for g in d.goals if occupancy[g] == 1.0)
            reward += covered / d.n_agents
            self._done = True
        return StepOutcome(
            state=self._state(),
            observations=self._observations(),
            reward=float(reward),
            terminated=terminated,
        )
