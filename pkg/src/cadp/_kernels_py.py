"""Pure numpy implementation of the hot numerical kernels.

This module is the reference backend. `cadp._kernels_cy` implements the
same contract in Cython and must agree with it numerically. Contract for
every function here:

  * all float arrays are C-contiguous float64; integer arrays are int64
  * forward functions allocate and return fresh arrays
  * backward functions take the upstream gradient plus whatever the
    forward cached, and return fresh arrays safe for the caller to mutate
  * optimizer steps update their buffers in place
"""

import numpy as np


def _sigmoid(x):
    # evaluated via tanh for better symmetry than 1/(1+exp(-x))
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# ---------------------------------------------------------------- linear


def linear_fwd(x, w, b):
    """y = x w^T (+ b). x: [r, in], w: [out, in], b: [out] or None."""
    y = x @ w.T
    if b is not None:
        y += b
    return y


def linear_bwd(g, x, w, need_dx):
    """Returns (dx or None, dw, db). g: [r, out]."""
    dw = g.T @ x
    db = g.sum(axis=0)
    dx = g @ w if need_dx else None
    return dx, dw, db


# ------------------------------------------------------------------- gru


def gru_fwd(x, h, w_r, w_z, w_h, u_r, u_z, u_h, b_r, b_z, b_h):
    """Gated recurrent unit step.

    r = sigm(x W_r^T + h U_r^T + b_r)
    z = sigm(x W_z^T + h U_z^T + b_z)
    cand = tanh(x W_h^T + (r*h) U_h^T + b_h)
    h' = (1-z)*h + z*cand

    Returns (h_new, r, z, cand); the gate activations are cached for the
    backward pass.
    """
    r = _sigmoid(x @ w_r.T + h @ u_r.T + b_r)
    z = _sigmoid(x @ w_z.T + h @ u_z.T + b_z)
    cand = np.tanh(x @ w_h.T + (r * h) @ u_h.T + b_h)
    h_new = (1.0 - z) * h + z * cand
    return h_new, r, z, cand


def gru_bwd(g, x, h, r, z, cand, w_r, w_z, w_h, u_r, u_z, u_h):
    """Backward of gru_fwd.

    Returns (dx, dh, dw_r, dw_z, dw_h, du_r, du_z, du_h, db_r, db_z, db_h).
    """
    d_cand = g * z
    dz = g * (cand - h)
    dh = g * (1.0 - z)

    da_h = d_cand * (1.0 - cand * cand)
    rh = r * h
    dw_h = da_h.T @ x
    du_h = da_h.T @ rh
    db_h = da_h.sum(axis=0)
    dx = da_h @ w_h
    drh = da_h @ u_h
    dr = drh * h
    dh += drh * r

    da_z = dz * z * (1.0 - z)
    dw_z = da_z.T @ x
    du_z = da_z.T @ h
    db_z = da_z.sum(axis=0)
    dx += da_z @ w_z
    dh += da_z @ u_z

    da_r = dr * r * (1.0 - r)
    dw_r = da_r.T @ x
    du_r = da_r.T @ h
    db_r = da_r.sum(axis=0)
    dx += da_r @ w_r
    dh += da_r @ u_r

    return dx, dh, dw_r, dw_z, dw_h, du_r, du_z, du_h, db_r, db_z, db_h


# --------------------------------------------------------------- softmax


def softmax_fwd(x):
    """Row-wise softmax over the last axis of a 2-D array, max-stabilized."""
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    e /= e.sum(axis=1, keepdims=True)
    return e


def softmax_bwd(g, y):
    """dx = (g - sum(g*y)) * y, row-wise."""
    dot = (g * y).sum(axis=1, keepdims=True)
    return (g - dot) * y


# ------------------------------------------------------------- attention


def attn_scores_fwd(q, k, scale):
    """scores[b,i,j] = scale * <q[b,i], k[b,j]>. q,k: [B,n,d]."""
    return scale * np.einsum("bid,bjd->bij", q, k, optimize=True)


def attn_scores_bwd(g, q, k, scale):
    dq = scale * np.einsum("bij,bjd->bid", g, k, optimize=True)
    dk = scale * np.einsum("bij,bid->bjd", g, q, optimize=True)
    return dq, dk


def bmm_fwd(a, b):
    """Batched matmul: [B,n,m] @ [B,m,p] -> [B,n,p]."""
    return a @ b


def bmm_bwd(g, a, b):
    da = g @ b.swapaxes(1, 2)
    db = a.swapaxes(1, 2) @ g
    return np.ascontiguousarray(da), np.ascontiguousarray(db)


# ------------------------------------------------------------ elementwise


def relu_fwd(x):
    return np.maximum(x, 0.0)


def relu_bwd(g, x):
    return np.where(x > 0.0, g, 0.0)


def elu_fwd(x):
    return np.where(x > 0.0, x, np.expm1(x))


def elu_bwd(g, x, y):
    # d/dx elu = 1 for x>0 else exp(x) = y+1
    return np.where(x > 0.0, g, g * (y + 1.0))


def abs_fwd(x):
    return np.abs(x)


def abs_bwd(g, x):
    return g * np.sign(x)


# -------------------------------------------------------------- optimizers


def adam_step(p, g, m, v, t, lr, beta1, beta2, eps):
    """One Adam update with bias correction, in place on p, m, v."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    p -= lr * m_hat / (np.sqrt(v_hat) + eps)


def rmsprop_step(p, g, sq, lr, smoothing, eps):
    """One RMSProp update (no momentum), in place on p, sq."""
    sq *= smoothing
    sq += (1.0 - smoothing) * g * g
    p -= lr * g / (np.sqrt(sq) + eps)
