"""Parameter containers, initialization, and layer wrappers."""

from __future__ import annotations

import math

import numpy as np

from . import autograd as ag
from .errors import UsageError


def fan_in_uniform(rng, out_dim, in_dim):
    """Weight init: uniform(-1/sqrt(in_dim), +1/sqrt(in_dim))."""
    bound = 1.0 / math.sqrt(in_dim)
    return rng.uniform(-bound, bound, size=(out_dim, in_dim))


class ParameterSet:
    """Ordered name -> Tensor mapping; the unit of persistence and optimization."""

    def __init__(self):
        self._params: dict[str, ag.Tensor] = {}

    def add(self, name, value):
        if name in self._params:
            raise UsageError(f"duplicate parameter name {name!r}")
        t = value if isinstance(value, ag.Tensor) else ag.Tensor(value, requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name):
        try:
            return self._params[name]
        except KeyError:
            raise UsageError(f"unknown parameter {name!r}") from None

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self):
        return list(self._params.values())

    def zero_grads(self):
        for t in self._params.values():
            t.zero_grad()

    def grad_norm(self):
        total = 0.0
        for t in self._params.values():
            if t.grad is not None:
                total += float((t.grad * t.grad).sum())
        return math.sqrt(total)

    def clone(self):
        """Deep copy (fresh arrays); used for target networks."""
        other = ParameterSet()
        for name, t in self._params.items():
            other.add(name, ag.Tensor(t.data.copy(), requires_grad=True))
        return other

    def copy_from(self, other):
        """In-place value copy from a set with identical names/shapes."""
        if self.names() != other.names():
            raise UsageError("parameter sets do not match")
        for name, t in self._params.items():
            src = other[name].data
            if src.shape != t.data.shape:
                raise UsageError(f"shape mismatch for {name!r}")
            np.copyto(t.data, src)

    def size(self):
        return sum(t.data.size for t in self._params.values())


class Linear:
    """Affine layer owning its parameters inside a ParameterSet."""

    def __init__(self, params, name, in_dim, out_dim, rng=None, bias=True):
        if rng is None:
            w = np.zeros((out_dim, in_dim))
        else:
            w = fan_in_uniform(rng, out_dim, in_dim)
        self.w = params.add(f"{name}.w", w)
        self.b = params.add(f"{name}.b", np.zeros(out_dim)) if bias else None

    def __call__(self, x):
        return ag.linear(x, self.w, self.b)


class GRUCell:
    """Single-step gated recurrent unit owning its parameters."""

    def __init__(self, params, name, input_dim, hidden_dim, rng=None):
        def init(out_d, in_d):
            return np.zeros((out_d, in_d)) if rng is None else fan_in_uniform(rng, out_d, in_d)

        self.hidden_dim = hidden_dim
        # gate order fixed: reset, update, candidate
        self.w_r = params.add(f"{name}.w_r", init(hidden_dim, input_dim))
        self.u_r = params.add(f"{name}.u_r", init(hidden_dim, hidden_dim))
        self.b_r = params.add(f"{name}.b_r", np.zeros(hidden_dim))
        self.w_z = params.add(f"{name}.w_z", init(hidden_dim, input_dim))
        self.u_z = params.add(f"{name}.u_z", init(hidden_dim, hidden_dim))
        self.b_z = params.add(f"{name}.b_z", np.zeros(hidden_dim))
        self.w_h = params.add(f"{name}.w_h", init(hidden_dim, input_dim))
        self.u_h = params.add(f"{name}.u_h", init(hidden_dim, hidden_dim))
        self.b_h = params.add(f"{name}.b_h", np.zeros(hidden_dim))

    def __call__(self, x, h):
        return ag.gru(
            x, h,
            self.w_r, self.w_z, self.w_h,
            self.u_r, self.u_z, self.u_h,
            self.b_r, self.b_z, self.b_h,
        )
