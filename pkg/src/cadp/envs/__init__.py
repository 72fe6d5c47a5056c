"""Environment registry and the selection-string parser.

Environments are picked by a compact string of the form
``name[,key=value...]``:

  * ``climbing``                       fixed 2-agent 3-action table
  * ``penalty`` / ``penalty,k=-100``   penalty table with payoff k
  * ``corridor,L=7,N=3,R=1,H=10,p=0.01``  corridor spread
"""

from __future__ import annotations

from ..errors import ConfigurationError
from .base import Env, EnvSpec, ObservationSet, StepOutcome
from .corridor import CorridorSpreadDef, CorridorSpreadEnv, default_goals
from .matrix import (
    CLIMBING_PAYOFF,
    MatrixGameDef,
    MatrixGameEnv,
    brute_force_optimal_return,
    climbing_game,
    penalty_game,
    penalty_payoff,
)

__all__ = [
    "Env",
    "EnvSpec",
    "ObservationSet",
    "StepOutcome",
    "MatrixGameDef",
    "MatrixGameEnv",
    "CorridorSpreadDef",
    "CorridorSpreadEnv",
    "CLIMBING_PAYOFF",
    "penalty_payoff",
    "climbing_game",
    "penalty_game",
    "brute_force_optimal_return",
    "default_goals",
    "make_env",
]


def _parse_params(parts):
    params = {}
    for part in parts:
        if "=" not in part:
            raise ConfigurationError(f"malformed env parameter {part!r}, expected key=value")
        key, value = part.split("=", 1)
        params[key.strip()] = value.strip()
    return params


def _pop_number(params, key, cast, default):
    if key not in params:
        return default
    raw = params.pop(key)
    try:
        return cast(raw)
    except ValueError:
        raise ConfigurationError(f"env parameter {key}={raw!r} is not a valid {cast.__name__}") from None


def make_env(selector):
    """Build an environment from a selection string."""
    parts = [p.strip() for p in str(selector).split(",") if p.strip()]
    if not parts:
        raise ConfigurationError("empty environment selector")
    name, params = parts[0], _parse_params(parts[1:])

    if name == "climbing":
        env = MatrixGameEnv(climbing_game())
    elif name == "penalty":
        k = _pop_number(params, "k", float, -100.0)
        env = MatrixGameEnv(penalty_game(k))
    elif name == "corridor":
        definition = CorridorSpreadDef(
            length=_pop_number(params, "L", int, 7),
            n_agents=_pop_number(params, "N", int, 3),
            sight_range=_pop_number(params, "R", int, 1),
            horizon=_pop_number(params, "H", int, 10),
            step_penalty=_pop_number(params, "p", float, 0.01),
        )
        env = CorridorSpreadEnv(definition)
    else:
        raise ConfigurationError(f"unknown environment {name!r}")

    if params:
        raise ConfigurationError(f"unknown parameters for env {name!r}: {sorted(params)}")
    return env
