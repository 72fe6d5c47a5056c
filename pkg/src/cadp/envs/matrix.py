"""One-step cooperative matrix games.

Both agents (in general: all N agents) pick simultaneously; the shared
reward is a payoff-table entry and the episode ends. Observations carry
no information beyond the agent's identity: a constant 1 plus the agent
one-hot. There is no designed global state, so the state is the standard
fallback — the concatenated observations. That keeps it constant but
nonzero: state-conditioned hypernetworks (whose biases start at zero)
would emit all-zero mixing weights for an all-zero state and cut every
gradient path through the mixer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, UsageError
from .base import Env, EnvSpec, ObservationSet, StepOutcome

CLIMBING_PAYOFF = np.array(
    [
        [11.0, -30.0, 0.0],
        [-30.0, 7.0, 6.0],
        [0.0, 0.0, 5.0],
    ]
)


def penalty_payoff(k):
    """Two safe corners worth 10 guarded by penalty k, and a middle worth 2."""
    return np.array(
        [
            [10.0, 0.0, float(k)],
            [0.0, 2.0, 0.0],
            [float(k), 0.0, 10.0],
        ]
    )


@dataclass(frozen=True)
class MatrixGameDef:
    name: str
    payoff: np.ndarray = field(repr=False)

    def __post_init__(self):
        payoff = np.asarray(self.payoff, dtype=np.float64)
        if payoff.ndim < 1:
            raise ConfigurationError("payoff table needs at least one axis")
        object.__setattr__(self, "payoff", payoff)

    @property
    def n_agents(self):
        return self.payoff.ndim

    @property
    def n_actions(self):
        return self.payoff.shape[0]


def brute_force_optimal_return(game, max_entries=1_000_000):
    """Exhaustive max over joint actions; refuses absurdly large tables."""
    if game.payoff.size > max_entries:
        raise UsageError(
            f"joint action space of {game.payoff.size} entries is too large to enumerate"
        )
    return float(game.payoff.max())


class MatrixGameEnv(Env):
    """Wraps a payoff table as a one-step environment."""

    def __init__(self, game):
        self.game = game
        n = game.n_agents
        obs_dim = 1 + n
        self.spec = EnvSpec(
            n_agents=n,
            n_actions=game.n_actions,
            obs_dim=obs_dim,
            state_dim=n * obs_dim,
            episode_limit=1,
        )
        self.optimal_return = brute_force_optimal_return(game)
        self._obs = np.concatenate([np.ones((n, 1)), np.eye(n)], axis=1)
        self._state = self._obs.reshape(-1).copy()
        self._avail = np.ones((n, game.n_actions), dtype=bool)
        self._done = True

    def _observations(self):
        return ObservationSet(obs=self._obs.copy(), avail=self._avail.copy())

    def reset(self, seed):
        self._done = False
        return self._state.copy(), self._observations()

    def step(self, actions):
        if self._done:
            raise UsageError("step called on a finished episode; reset first")
        actions = self.check_actions(actions, self._avail)
        reward = float(self.game.payoff[tuple(actions)])
        self._done = True
        return StepOutcome(
            state=self._state.copy(),
            observations=self._observations(),
            reward=reward,
            terminated=True,
        )


def climbing_game():
    return MatrixGameDef("climbing", CLIMBING_PAYOFF)


def penalty_game(k=-100.0):
    return MatrixGameDef("penalty", penalty_payoff(k))
