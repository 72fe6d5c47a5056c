"""Gradient-descent optimizers and a finite-difference gradient checker."""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from . import backend
from .errors import UsageError


class Adam:
    """Adam with bias correction."""

    def __init__(self, params, lr=5e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self._m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self._v = {name: np.zeros_like(t.data) for name, t in params.items()}

    def step(self):
        self.step_count += 1
        for name, t in self.params.items():
            g = _require_grad(name, t)
            backend.kernels.adam_step(
                t.data, g, self._m[name], self._v[name],
                self.step_count, self.lr, self.beta1, self.beta2, self.eps,
            )

    def state_dict(self):
        return {
            "kind": "adam",
            "step_count": self.step_count,
            "slots": {"m": self._m, "v": self._v},
        }

    def load_state_dict(self, state):
        if state.get("kind") != "adam":
            raise UsageError("optimizer state kind mismatch")
        self.step_count = int(state["step_count"])
        _load_slots(self._m, state["slots"]["m"])
        _load_slots(self._v, state["slots"]["v"])


class RMSProp:
    """RMSProp without momentum: p -= lr * g / (sqrt(avg(g^2)) + eps)."""

    def __init__(self, params, lr=5e-4, smoothing=0.99, eps=1e-5):
        self.params = params
        self.lr = float(lr)
        self.smoothing = float(smoothing)
        self.eps = float(eps)
        self.step_count = 0
        self._sq = {name: np.zeros_like(t.data) for name, t in params.items()}

    def step(self):
        self.step_count += 1
        for name, t in self.params.items():
            g = _require_grad(name, t)
            backend.kernels.rmsprop_step(
                t.data, g, self._sq[name], self.lr, self.smoothing, self.eps,
            )

    def state_dict(self):
        return {
            "kind": "rmsprop",
            "step_count": self.step_count,
            "slots": {"sq": self._sq},
        }

    def load_state_dict(self, state):
        if state.get("kind") != "rmsprop":
            raise UsageError("optimizer state kind mismatch")
        self.step_count = int(state["step_count"])
        _load_slots(self._sq, state["slots"]["sq"])


def make_optimizer(name, params, lr):
    if name == "adam":
        return Adam(params, lr=lr)
    if name == "rmsprop":
        return RMSProp(params, lr=lr)
    raise UsageError(f"unknown optimizer {name!r}")


def _require_grad(name, t):
    if t.grad is None:
        raise UsageError(f"parameter {name!r} has no gradient; run backward first")
    return t.grad


def _load_slots(dst, src):
    if set(dst) != set(src):
        raise UsageError("optimizer slot names do not match")
    for name in dst:
        np.copyto(dst[name], np.asarray(src[name], dtype=np.float64))


def grad_check(fn, params, h=1e-6, max_coords_per_param=None, rng=None):
    """Compare analytic gradients of a scalar function against central differences.

    fn() must rebuild its graph from the current parameter values and be
    deterministic. Returns max over checked coordinates of
    |analytic - fd| / max(1, |analytic|). With max_coords_per_param set,
    a seeded rng picks that many coordinates per tensor (full sweep
    otherwise).
    """
    params.zero_grads()
    loss = fn()
    ag.backward(loss)
    analytic = {name: t.grad.copy() for name, t in params.items()}

    if max_coords_per_param is not None and rng is None:
        rng = np.random.default_rng(0)

    worst = 0.0
    for name, t in params.items():
        flat = t.data.reshape(-1)
        n = flat.size
        if max_coords_per_param is None or n <= max_coords_per_param:
            coords = np.arange(n)
        else:
            coords = rng.choice(n, size=max_coords_per_param, replace=False)
        a_flat = analytic[name].reshape(-1)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            with ag.no_grad():
                f_plus = fn().item()
            flat[c] = orig - h
            with ag.no_grad():
                f_minus = fn().item()
            flat[c] = orig
            fd = (f_plus - f_minus) / (2.0 * h)
            a = a_flat[c]
            rel = abs(a - fd) / max(1.0, abs(a))
            if rel > worst:
                worst = rel
    return worst
