"""Shared environment interfaces: fixed-size specs and step records."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import UsageError


@dataclass(frozen=True)
class EnvSpec:
    """Static dimensions a trainer needs before touching the environment."""

    n_agents: int
    n_actions: int
    obs_dim: int
    state_dim: int
    episode_limit: int


@dataclass
class ObservationSet:
    """Per-agent observations [n_agents, obs_dim] and availability masks."""

    obs: np.ndarray
    avail: np.ndarray

    def validate(self, spec):
        if self.obs.shape != (spec.n_agents, spec.obs_dim):
            raise UsageError(f"obs shape {self.obs.shape} does not match spec")
        if self.avail.shape != (spec.n_agents, spec.n_actions):
            raise UsageError(f"avail shape {self.avail.shape} does not match spec")
        if not self.avail.any(axis=1).all():
            raise UsageError("every agent needs at least one available action")


@dataclass
class StepOutcome:
    """Result of one joint step."""

    state: np.ndarray
    observations: ObservationSet
    reward: float
    terminated: bool


class Env:
    """Base class; concrete environments implement reset/step.

    Contract: `reset(seed)` -> (state, ObservationSet) deterministically;
    `step(actions)` advances exactly one tick and may not be called after
    termination. `optimal_return` is the best achievable episode return,
    and an episode counts as won when its return reaches it.
    """

    spec: EnvSpec
    optimal_return: float

    def reset(self, seed):
        raise NotImplementedError

    def step(self, actions):
        raise NotImplementedError

    def check_actions(self, actions, avail):
        actions = np.asarray(actions)
        n, a = self.spec.n_agents, self.spec.n_actions
        if actions.shape != (n,):
            raise UsageError(f"expected {n} actions, got shape {actions.shape}")
        if not np.issubdtype(actions.dtype, np.integer):
            raise UsageError("actions must be integers")
        if actions.min() < 0 or actions.max() >= a:
            raise UsageError("action index out of range")
        if not avail[np.arange(n), actions].all():
            raise UsageError("an unavailable action was selected")
        return actions
