"""Reverse-mode automatic differentiation over float64 numpy arrays.

A `Tensor` wraps an ndarray; operations record a tape node holding the
parent tensors and a backward closure. `backward(loss)` walks the graph
in reverse topological order and accumulates gradients into the `.grad`
slot of every reachable tensor with `requires_grad=True` (allocating it
on first use — repeated backward calls keep accumulating until
`zero_grad`).

Gradient-buffer contract for backward closures: each closure returns one
fresh array per parent (or None for parents that need no gradient). The
same array object must never be returned for two distinct parents; views
into the consumed upstream gradient are allowed because that buffer is
released once distributed.

Ops are layer-grained (whole linear/GRU/softmax steps) so the tape stays
short; the heavy math is delegated to the active kernel backend.
"""

from __future__ import annotations

import numpy as np

from . import backend
from .errors import NumericError, UsageError

_GRAD_ENABLED = True


class no_grad:
    """Context manager disabling tape recording (forward-only evaluation)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def grad_enabled():
    return _GRAD_ENABLED


class Tensor:
    """Float64 array plus an optional tape node."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bwd")

    def __init__(self, data, requires_grad=False):
        # C-contiguity is part of the kernel calling convention, so
        # normalize once at tensor creation instead of per call. Skip
        # 0-d arrays: ascontiguousarray would promote them to 1-d.
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._bwd = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _bad_item(self)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        tag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{tag})"


def _bad_item(t):
    raise UsageError(f"item() needs a single-element tensor, got shape {t.data.shape}")


def constant(data):
    """Wrap data as a non-tracked tensor."""
    return Tensor(data)


def _tracked(t):
    return t.requires_grad or t._bwd is not None


def _wants_grad(*tensors):
    if not _GRAD_ENABLED:
        return False
    for t in tensors:
        if t is not None and _tracked(t):
            return True
    return False


def backward(loss):
    """Accumulate d(loss)/d(tensor) into .grad over the graph below loss."""
    if loss.data.size != 1:
        raise UsageError(f"backward expects a scalar loss, got shape {loss.data.shape}")

    topo = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad += g
        if node._bwd is None:
            continue
        parent_grads = node._bwd(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not _tracked(parent):
                continue
            key = id(parent)
            acc = grads.get(key)
            if acc is None:
                grads[key] = pg
            else:
                acc += pg


# ----------------------------------------------------------------- ops


def linear(x, w, b=None):
    """Affine map on row vectors: y = x w^T (+ b)."""
    xd, wd = x.data, w.data
    bd = None if b is None else b.data
    y = backend.kernels.linear_fwd(xd, wd, bd)
    out = Tensor(y)
    if not _wants_grad(x, w, b):
        return out
    need_dx = _tracked(x)

    def bwd(g):
        dx, dw, db = backend.kernels.linear_bwd(g, xd, wd, need_dx)
        return (dx, dw) if b is None else (dx, dw, db)

    out._parents = (x, w) if b is None else (x, w, b)
    out._bwd = bwd
    return out


def gru(x, h, w_r, w_z, w_h, u_r, u_z, u_h, b_r, b_z, b_h):
    """One recurrent step; see the kernel docstring for the gate layout."""
    xd, hd = x.data, h.data
    weights = (w_r.data, w_z.data, w_h.data, u_r.data, u_z.data, u_h.data)
    biases = (b_r.data, b_z.data, b_h.data)
    h_new, r, z, cand = backend.kernels.gru_fwd(xd, hd, *weights, *biases)
    out = Tensor(h_new)
    params = (x, h, w_r, w_z, w_h, u_r, u_z, u_h, b_r, b_z, b_h)
    if not _wants_grad(*params):
        return out

    def bwd(g):
        return backend.kernels.gru_bwd(g, xd, hd, r, z, cand, *weights)

    out._parents = params
    out._bwd = bwd
    return out


def softmax_last(x):
    """Softmax over the last axis; rejects non-finite inputs."""
    xd = x.data
    if not np.isfinite(xd).all():
        raise NumericError("softmax input contains non-finite values")
    flat = xd.reshape(-1, xd.shape[-1])
    y = backend.kernels.softmax_fwd(np.ascontiguousarray(flat))
    out = Tensor(y.reshape(xd.shape))
    if not _wants_grad(x):
        return out

    def bwd(g):
        gf = np.ascontiguousarray(g.reshape(y.shape))
        dx = backend.kernels.softmax_bwd(gf, y)
        return (dx.reshape(xd.shape),)

    out._parents = (x,)
    out._bwd = bwd
    return out


def attention_scores(q, k, scale):
    """Scaled pairwise dot products between per-agent rows: [B,n,d]x2 -> [B,n,n]."""
    qd, kd = q.data, k.data
    s = backend.kernels.attn_scores_fwd(qd, kd, scale)
    out = Tensor(s)
    if not _wants_grad(q, k):
        return out

    def bwd(g):
        return backend.kernels.attn_scores_bwd(np.ascontiguousarray(g), qd, kd, scale)

    out._parents = (q, k)
    out._bwd = bwd
    return out


def bmm(a, b):
    """Batched matrix multiply [B,n,m] @ [B,m,p]."""
    ad, bd = a.data, b.data
    y = backend.kernels.bmm_fwd(ad, bd)
    out = Tensor(y)
    if not _wants_grad(a, b):
        return out

    def bwd(g):
        return backend.kernels.bmm_bwd(np.ascontiguousarray(g), ad, bd)

    out._parents = (a, b)
    out._bwd = bwd
    return out


def relu(x):
    xd = x.data
    out = Tensor(backend.kernels.relu_fwd(xd))
    if not _wants_grad(x):
        return out
    out._parents = (x,)
    out._bwd = lambda g: (backend.kernels.relu_bwd(g, xd),)
    return out


def elu(x):
    """Exponential linear unit, alpha=1."""
    xd = x.data
    y = backend.kernels.elu_fwd(xd)
    out = Tensor(y)
    if not _wants_grad(x):
        return out
    out._parents = (x,)
    out._bwd = lambda g: (backend.kernels.elu_bwd(g, xd, y),)
    return out


def abs_val(x):
    xd = x.data
    out = Tensor(backend.kernels.abs_fwd(xd))
    if not _wants_grad(x):
        return out
    out._parents = (x,)
    out._bwd = lambda g: (backend.kernels.abs_bwd(g, xd),)
    return out


def add(a, b):
    _check_same_shape("add", a, b)
    out = Tensor(a.data + b.data)
    if not _wants_grad(a, b):
        return out
    out._parents = (a, b)
    out._bwd = lambda g: (g, g.copy())
    return out


def sub(a, b):
    _check_same_shape("sub", a, b)
    out = Tensor(a.data - b.data)
    if not _wants_grad(a, b):
        return out
    out._parents = (a, b)
    out._bwd = lambda g: (g, -g)
    return out


def mul(a, b):
    _check_same_shape("mul", a, b)
    ad, bd = a.data, b.data
    out = Tensor(ad * bd)
    if not _wants_grad(a, b):
        return out
    out._parents = (a, b)
    out._bwd = lambda g: (g * bd, g * ad)
    return out


def _check_same_shape(name, a, b):
    if a.data.shape != b.data.shape:
        raise UsageError(f"{name} expects equal shapes, got {a.data.shape} and {b.data.shape}")


def scale(x, s):
    s = float(s)
    out = Tensor(x.data * s)
    if not _wants_grad(x):
        return out
    out._parents = (x,)
    out._bwd = lambda g: (g * s,)
    return out


def add_const(x, c):
    out = Tensor(x.data + float(c))
    if not _wants_grad(x):
        return out
    out._parents = (x,)
    out._bwd = lambda g: (g,)
    return out


def clip_max_const(x, cap):
    """Elementwise min(x, cap); gradient passes where x <= cap."""
    xd = x.data
    cap = float(cap)
    out = Tensor(np.minimum(xd, cap))
    if not _wants_grad(x):
        return out
    out._parents = (x,)
    out._bwd = lambda g: (np.where(xd <= cap, g, 0.0),)
    return out


def log(x):
    xd = x.data
    if np.any(xd <= 0.0):
        raise NumericError("log input must be strictly positive")
    out = Tensor(np.log(xd))
    if not _wants_grad(x):
        return out
    out._parents = (x,)
    out._bwd = lambda g: (g / xd,)
    return out


def concat_last(a, b):
    """Concatenate along the last axis."""
    ad, bd = a.data, b.data
    k = ad.shape[-1]
    out = Tensor(np.concatenate([ad, bd], axis=-1))
    if not _wants_grad(a, b):
        return out
    out._parents = (a, b)
    out._bwd = lambda g: (g[..., :k].copy(), g[..., k:].copy())
    return out


def reshape(x, shape):
    xd = x.data
    out = Tensor(np.ascontiguousarray(xd).reshape(shape))
    if not _wants_grad(x):
        return out
    out._parents = (x,)
    out._bwd = lambda g: (np.ascontiguousarray(g).reshape(xd.shape),)
    return out


def gather_last(x, idx):
    """Pick one entry per row: x [r, n] with int idx [r] -> [r]."""
    xd = x.data
    idx = np.asarray(idx, dtype=np.int64)
    rows = np.arange(xd.shape[0])
    out = Tensor(xd[rows, idx])
    if not _wants_grad(x):
        return out

    def bwd(g):
        dx = np.zeros_like(xd)
        dx[rows, idx] = g
        return (dx,)

    out._parents = (x,)
    out._bwd = bwd
    return out


def diagonal_last2(x):
    """Diagonal of each trailing square matrix: [B,n,n] -> [B,n]."""
    xd = x.data
    n = xd.shape[-1]
    ar = np.arange(n)
    out = Tensor(np.ascontiguousarray(xd[:, ar, ar]))
    if not _wants_grad(x):
        return out

    def bwd(g):
        dx = np.zeros_like(xd)
        dx[:, ar, ar] = g
        return (dx,)

    out._parents = (x,)
    out._bwd = bwd
    return out


def sum_all(x):
    """Sum of all elements -> scalar tensor."""
    xd = x.data
    out = Tensor(np.array(xd.sum()))
    if not _wants_grad(x):
        return out
    out._parents = (x,)
    out._bwd = lambda g: (np.full(xd.shape, float(g)),)
    return out


def sum_last(x):
    """Sum over the last axis."""
    xd = x.data
    n = xd.shape[-1]
    out = Tensor(xd.sum(axis=-1))
    if not _wants_grad(x):
        return out
    out._parents = (x,)
    out._bwd = lambda g: (np.repeat(g[..., None], n, axis=-1).astype(np.float64),)
    return out
