"""Flat key=value run configuration with typed parsing and overrides."""

from __future__ import annotations

from dataclasses import dataclass, fields

from .errors import ConfigurationError

_MIXERS = ("vdn", "qmix")
_OPTIMIZERS = ("adam", "rmsprop")


@dataclass
class TrainConfig:
    env: str = "climbing"
    mixer: str = "qmix"
    advice: bool = True
    total_steps: int = 50_000
    gamma: float = 0.99
    lr: float = 5e-4
    optimizer: str = "adam"
    buffer_capacity: int = 5000
    batch_size: int = 32
    target_interval: int = 200
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_anneal_steps: int = 50_000
    prune_start: int = -1  # -1: three quarters of total_steps
    prune_coef: float = 0.5
    eval_interval: int = 5000
    eval_episodes: int = 32
    seed: int = 0

    def prune_start_resolved(self):
        if self.prune_start < 0:
            return (3 * self.total_steps) // 4
        return self.prune_start

    def validate(self):
        if self.mixer not in _MIXERS:
            raise ConfigurationError(f"mixer must be one of {_MIXERS}, got {self.mixer!r}")
        if self.optimizer not in _OPTIMIZERS:
            raise ConfigurationError(
                f"optimizer must be one of {_OPTIMIZERS}, got {self.optimizer!r}"
            )
        positive = (
            "total_steps", "buffer_capacity", "batch_size", "target_interval",
            "epsilon_anneal_steps", "eval_interval", "eval_episodes",
        )
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")
        if self.lr <= 0:
            raise ConfigurationError("lr must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError("gamma must lie in [0, 1]")
        if not 0.0 <= self.epsilon_end <= self.epsilon_start <= 1.0:
            raise ConfigurationError("need 0 <= epsilon_end <= epsilon_start <= 1")
        if self.buffer_capacity < self.batch_size:
            raise ConfigurationError("buffer_capacity must be at least batch_size")
        if self.prune_coef < 0:
            raise ConfigurationError("prune_coef must be non-negative")
        if self.prune_start < -1:
            raise ConfigurationError("prune_start must be -1 (auto) or non-negative")
        # prune_start beyond total_steps is allowed: the pruning phase
        # simply never activates within this budget (useful when a short
        # run will later be resumed with a larger one)
        if self.seed < 0:
            raise ConfigurationError("seed must be non-negative")
        return self

    def to_text(self):
        """Round-trippable key=value rendering in declaration order."""
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.type == "bool" or isinstance(value, bool):
                rendered = "true" if value else "false"
            else:
                rendered = repr(value) if isinstance(value, float) else str(value)
            lines.append(f"{f.name} = {rendered}")
        return "\n".join(lines) + "\n"

    def replace(self, **kw):
        merged = {f.name: getattr(self, f.name) for f in fields(self)}
        merged.update(kw)
        return TrainConfig(**merged).validate()


def _parse_bool(raw, key):
    low = raw.lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigurationError(f"{key}={raw!r} is not a boolean")


def _coerce(field, raw, key):
    kind = field.type
    try:
        if kind == "bool":
            return _parse_bool(raw, key)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ConfigurationError(f"{key}={raw!r} is not a valid {kind}") from None


def parse_config_text(text, overrides=()):
    """Parse key=value lines plus --set style overrides into a TrainConfig."""
    by_name = {f.name: f for f in fields(TrainConfig)}
    values = {}

    def apply(key, raw, where):
        key = key.strip()
        if key not in by_name:
            raise ConfigurationError(
                f"unknown config key {key!r} in {where}; valid keys: {sorted(by_name)}"
            )
        values[key] = _coerce(by_name[key], raw.strip(), key)

    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"line {lineno} is not key=value: {line!r}")
        key, raw = stripped.split("=", 1)
        apply(key, raw, f"line {lineno}")

    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        apply(key, raw, "override")

    return TrainConfig(**values).validate()


def load_config(path, overrides=()):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from None
    return parse_config_text(text, overrides)
