# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled implementation of the hot numerical kernels.

Mirrors cadp._kernels_py exactly (same functions, same contract). Dense
matrix products go through BLAS dgemm; gate fusions, softmax rows, and
optimizer updates are flat C loops.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, expm1, fabs, pow, sqrt, tanh

from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef inline double _sigmoid(double x) noexcept nogil:
    return 0.5 * (1.0 + tanh(0.5 * x))


cdef void _gemm(bint ta, bint tb, int m, int n, int k,
                double alpha, double *a, double *b,
                double beta, double *c) noexcept nogil:
    """Row-major C[m,n] = alpha*op(A)[m,k] @ op(B)[k,n] + beta*C.

    Fortran dgemm computes the transposed problem: C^T = op(B)^T op(A)^T,
    which maps row-major storage onto column-major arguments directly.
    """
    cdef char transa = b'T' if tb else b'N'
    cdef char transb = b'T' if ta else b'N'
    cdef int lda = k if tb else n
    cdef int ldb = m if ta else k
    cdef int ldc = n
    cdef int mm = n
    cdef int nn = m
    cdef int kk = k
    dgemm(&transa, &transb, &mm, &nn, &kk, &alpha, b, &lda, a, &ldb, &beta, c, &ldc)


# ---------------------------------------------------------------- linear


def linear_fwd(cnp.ndarray x, cnp.ndarray w, b):
    cdef int r = x.shape[0]
    cdef int din = x.shape[1]
    cdef int dout = w.shape[0]
    cdef cnp.ndarray y = np.empty((r, dout), dtype=np.float64)
    cdef double[:, ::1] xv = x
    cdef double[:, ::1] wv = w
    cdef double[:, ::1] yv = y
    cdef double[::1] bv
    cdef int i, j
    _gemm(False, True, r, dout, din, 1.0, &xv[0, 0], &wv[0, 0], 0.0, &yv[0, 0])
    if b is not None:
        bv = b
        with nogil:
            for i in range(r):
                for j in range(dout):
                    yv[i, j] += bv[j]
    return y


def linear_bwd(cnp.ndarray g, cnp.ndarray x, cnp.ndarray w, bint need_dx):
    cdef int r = x.shape[0]
    cdef int din = x.shape[1]
    cdef int dout = w.shape[0]
    cdef cnp.ndarray dw = np.empty((dout, din), dtype=np.float64)
    cdef cnp.ndarray db = np.empty(dout, dtype=np.float64)
    cdef cnp.ndarray dx = None
    cdef double[:, ::1] gv = g
    cdef double[:, ::1] xv = x
    cdef double[:, ::1] wv = w
    cdef double[:, ::1] dwv = dw
    cdef double[::1] dbv = db
    cdef double[:, ::1] dxv
    cdef int i, j
    cdef double s
    _gemm(True, False, dout, din, r, 1.0, &gv[0, 0], &xv[0, 0], 0.0, &dwv[0, 0])
    with nogil:
        for j in range(dout):
            s = 0.0
            for i in range(r):
                s += gv[i, j]
            dbv[j] = s
    if need_dx:
        dx = np.empty((r, din), dtype=np.float64)
        dxv = dx
        _gemm(False, False, r, din, dout, 1.0, &gv[0, 0], &wv[0, 0], 0.0, &dxv[0, 0])
    return dx, dw, db


# ------------------------------------------------------------------- gru


def gru_fwd(cnp.ndarray x, cnp.ndarray h,
            cnp.ndarray w_r, cnp.ndarray w_z, cnp.ndarray w_h,
            cnp.ndarray u_r, cnp.ndarray u_z, cnp.ndarray u_h,
            cnp.ndarray b_r, cnp.ndarray b_z, cnp.ndarray b_h):
    cdef int rr = x.shape[0]
    cdef int din = x.shape[1]
    cdef int hd = h.shape[1]
    cdef cnp.ndarray r_pre = np.empty((rr, hd), dtype=np.float64)
    cdef cnp.ndarray z_pre = np.empty((rr, hd), dtype=np.float64)
    cdef cnp.ndarray c_pre = np.empty((rr, hd), dtype=np.float64)
    cdef double[:, ::1] xv = x, hv = h
    cdef double[:, ::1] wrv = w_r, wzv = w_z, whv = w_h
    cdef double[:, ::1] urv = u_r, uzv = u_z, uhv = u_h
    cdef double[:, ::1] rpv = r_pre, zpv = z_pre, cpv = c_pre
    cdef double[:, ::1] rhv

    # gate pre-activations via gemm; the transcendentals go through
    # numpy's vectorized ufuncs, which beat scalar libm loops
    _gemm(False, True, rr, hd, din, 1.0, &xv[0, 0], &wrv[0, 0], 0.0, &rpv[0, 0])
    _gemm(False, True, rr, hd, hd, 1.0, &hv[0, 0], &urv[0, 0], 1.0, &rpv[0, 0])
    _gemm(False, True, rr, hd, din, 1.0, &xv[0, 0], &wzv[0, 0], 0.0, &zpv[0, 0])
    _gemm(False, True, rr, hd, hd, 1.0, &hv[0, 0], &uzv[0, 0], 1.0, &zpv[0, 0])
    r_pre += b_r
    z_pre += b_z
    np.tanh(r_pre * 0.5, out=r_pre)
    np.tanh(z_pre * 0.5, out=z_pre)
    r_pre *= 0.5
    r_pre += 0.5   # sigmoid(a) = (1 + tanh(a/2)) / 2
    z_pre *= 0.5
    z_pre += 0.5
    cdef cnp.ndarray rh = r_pre * h
    rhv = rh
    _gemm(False, True, rr, hd, din, 1.0, &xv[0, 0], &whv[0, 0], 0.0, &cpv[0, 0])
    _gemm(False, True, rr, hd, hd, 1.0, &rhv[0, 0], &uhv[0, 0], 1.0, &cpv[0, 0])
    c_pre += b_h
    np.tanh(c_pre, out=c_pre)
    cdef cnp.ndarray h_new = (1.0 - z_pre) * h + z_pre * c_pre
    return h_new, r_pre, z_pre, c_pre


def gru_bwd(cnp.ndarray g, cnp.ndarray x, cnp.ndarray h,
            cnp.ndarray r, cnp.ndarray z, cnp.ndarray cand,
            cnp.ndarray w_r, cnp.ndarray w_z, cnp.ndarray w_h,
            cnp.ndarray u_r, cnp.ndarray u_z, cnp.ndarray u_h):
    cdef int rr = x.shape[0]
    cdef int din = x.shape[1]
    cdef int hd = h.shape[1]
    cdef cnp.ndarray dx = np.empty((rr, din), dtype=np.float64)
    cdef cnp.ndarray dh = np.empty((rr, hd), dtype=np.float64)
    cdef cnp.ndarray da_h = np.empty((rr, hd), dtype=np.float64)
    cdef cnp.ndarray da_z = np.empty((rr, hd), dtype=np.float64)
    cdef cnp.ndarray da_r = np.empty((rr, hd), dtype=np.float64)
    cdef cnp.ndarray drh = np.empty((rr, hd), dtype=np.float64)
    cdef cnp.ndarray rh = np.empty((rr, hd), dtype=np.float64)
    cdef cnp.ndarray dw_r = np.empty((hd, din), dtype=np.float64)
    cdef cnp.ndarray dw_z = np.empty((hd, din), dtype=np.float64)
    cdef cnp.ndarray dw_h = np.empty((hd, din), dtype=np.float64)
    cdef cnp.ndarray du_r = np.empty((hd, hd), dtype=np.float64)
    cdef cnp.ndarray du_z = np.empty((hd, hd), dtype=np.float64)
    cdef cnp.ndarray du_h = np.empty((hd, hd), dtype=np.float64)
    cdef cnp.ndarray db_r = np.empty(hd, dtype=np.float64)
    cdef cnp.ndarray db_z = np.empty(hd, dtype=np.float64)
    cdef cnp.ndarray db_h = np.empty(hd, dtype=np.float64)
    cdef double[:, ::1] gv = g, xv = x, hv = h, rv = r, zv = z, cv = cand
    cdef double[:, ::1] wrv = w_r, wzv = w_z, whv = w_h
    cdef double[:, ::1] urv = u_r, uzv = u_z, uhv = u_h
    cdef double[:, ::1] dxv = dx, dhv = dh
    cdef double[:, ::1] dahv = da_h, dazv = da_z, darv = da_r, drhv = drh, rhv = rh
    cdef double[:, ::1] dwrv = dw_r, dwzv = dw_z, dwhv = dw_h
    cdef double[:, ::1] durv = du_r, duzv = du_z, duhv = du_h
    cdef double[::1] dbrv = db_r, dbzv = db_z, dbhv = db_h
    cdef int i, j
    cdef double gg, zz, cc, dz, dcand, dr

    with nogil:
        for i in range(rr):
            for j in range(hd):
                gg = gv[i, j]
                zz = zv[i, j]
                cc = cv[i, j]
                dcand = gg * zz
                dz = gg * (cc - hv[i, j])
                dhv[i, j] = gg * (1.0 - zz)
                dahv[i, j] = dcand * (1.0 - cc * cc)
                dazv[i, j] = dz * zz * (1.0 - zz)
                rhv[i, j] = rv[i, j] * hv[i, j]

    _gemm(True, False, hd, din, rr, 1.0, &dahv[0, 0], &xv[0, 0], 0.0, &dwhv[0, 0])
    _gemm(True, False, hd, hd, rr, 1.0, &dahv[0, 0], &rhv[0, 0], 0.0, &duhv[0, 0])
    _gemm(False, False, rr, din, hd, 1.0, &dahv[0, 0], &whv[0, 0], 0.0, &dxv[0, 0])
    _gemm(False, False, rr, hd, hd, 1.0, &dahv[0, 0], &uhv[0, 0], 0.0, &drhv[0, 0])

    with nogil:
        for i in range(rr):
            for j in range(hd):
                dr = drhv[i, j] * hv[i, j]
                dhv[i, j] += drhv[i, j] * rv[i, j]
                darv[i, j] = dr * rv[i, j] * (1.0 - rv[i, j])

    _gemm(True, False, hd, din, rr, 1.0, &dazv[0, 0], &xv[0, 0], 0.0, &dwzv[0, 0])
    _gemm(True, False, hd, hd, rr, 1.0, &dazv[0, 0], &hv[0, 0], 0.0, &duzv[0, 0])
    _gemm(False, False, rr, din, hd, 1.0, &dazv[0, 0], &wzv[0, 0], 1.0, &dxv[0, 0])
    _gemm(False, False, rr, hd, hd, 1.0, &dazv[0, 0], &uzv[0, 0], 1.0, &dhv[0, 0])

    _gemm(True, False, hd, din, rr, 1.0, &darv[0, 0], &xv[0, 0], 0.0, &dwrv[0, 0])
    _gemm(True, False, hd, hd, rr, 1.0, &darv[0, 0], &hv[0, 0], 0.0, &durv[0, 0])
    _gemm(False, False, rr, din, hd, 1.0, &darv[0, 0], &wrv[0, 0], 1.0, &dxv[0, 0])
    _gemm(False, False, rr, hd, hd, 1.0, &darv[0, 0], &urv[0, 0], 1.0, &dhv[0, 0])

    with nogil:
        for j in range(hd):
            dbrv[j] = 0.0
            dbzv[j] = 0.0
            dbhv[j] = 0.0
        for i in range(rr):
            for j in range(hd):
                dbrv[j] += darv[i, j]
                dbzv[j] += dazv[i, j]
                dbhv[j] += dahv[i, j]

    return dx, dh, dw_r, dw_z, dw_h, du_r, du_z, du_h, db_r, db_z, db_h


# --------------------------------------------------------------- softmax


def softmax_fwd(cnp.ndarray x):
    cdef int r = x.shape[0]
    cdef int n = x.shape[1]
    cdef cnp.ndarray y = np.empty((r, n), dtype=np.float64)
    cdef double[:, ::1] xv = x
    cdef double[:, ::1] yv = y
    cdef int i, j
    cdef double mx, s
    with nogil:
        for i in range(r):
            mx = xv[i, 0]
            for j in range(1, n):
                if xv[i, j] > mx:
                    mx = xv[i, j]
            s = 0.0
            for j in range(n):
                yv[i, j] = exp(xv[i, j] - mx)
                s += yv[i, j]
            for j in range(n):
                yv[i, j] /= s
    return y


def softmax_bwd(cnp.ndarray g, cnp.ndarray y):
    cdef int r = y.shape[0]
    cdef int n = y.shape[1]
    cdef cnp.ndarray dx = np.empty((r, n), dtype=np.float64)
    cdef double[:, ::1] gv = g
    cdef double[:, ::1] yv = y
    cdef double[:, ::1] dxv = dx
    cdef int i, j
    cdef double dot
    with nogil:
        for i in range(r):
            dot = 0.0
            for j in range(n):
                dot += gv[i, j] * yv[i, j]
            for j in range(n):
                dxv[i, j] = (gv[i, j] - dot) * yv[i, j]
    return dx


# ------------------------------------------------------------- attention


def attn_scores_fwd(cnp.ndarray q, cnp.ndarray k, double scale):
    cdef int bsz = q.shape[0]
    cdef int n = q.shape[1]
    cdef int d = q.shape[2]
    cdef cnp.ndarray s = np.empty((bsz, n, n), dtype=np.float64)
    cdef double[:, :, ::1] qv = q
    cdef double[:, :, ::1] kv = k
    cdef double[:, :, ::1] sv = s
    cdef int b, i, j, t
    cdef double acc
    with nogil:
        for b in range(bsz):
            for i in range(n):
                for j in range(n):
                    acc = 0.0
                    for t in range(d):
                        acc += qv[b, i, t] * kv[b, j, t]
                    sv[b, i, j] = scale * acc
    return s


def attn_scores_bwd(cnp.ndarray g, cnp.ndarray q, cnp.ndarray k, double scale):
    cdef int bsz = q.shape[0]
    cdef int n = q.shape[1]
    cdef int d = q.shape[2]
    cdef cnp.ndarray dq = np.zeros((bsz, n, d), dtype=np.float64)
    cdef cnp.ndarray dk = np.zeros((bsz, n, d), dtype=np.float64)
    cdef double[:, :, ::1] gv = g
    cdef double[:, :, ::1] qv = q
    cdef double[:, :, ::1] kv = k
    cdef double[:, :, ::1] dqv = dq
    cdef double[:, :, ::1] dkv = dk
    cdef int b, i, j, t
    cdef double gg
    with nogil:
        for b in range(bsz):
            for i in range(n):
                for j in range(n):
                    gg = scale * gv[b, i, j]
                    for t in range(d):
                        dqv[b, i, t] += gg * kv[b, j, t]
                        dkv[b, j, t] += gg * qv[b, i, t]
    return dq, dk


def bmm_fwd(cnp.ndarray a, cnp.ndarray b):
    # numpy's batched matmul is the fastest correct implementation at the
    # tiny [B, n, d] shapes this laboratory uses; no point fighting it
    # with scalar loops here.
    return a @ b


def bmm_bwd(cnp.ndarray g, cnp.ndarray a, cnp.ndarray b):
    cdef cnp.ndarray da = np.ascontiguousarray(g @ b.swapaxes(1, 2))
    cdef cnp.ndarray db = np.ascontiguousarray(a.swapaxes(1, 2) @ g)
    return da, db


# ------------------------------------------------------------ elementwise


def relu_fwd(cnp.ndarray x):
    cdef cnp.ndarray xf = x.reshape(-1)
    cdef cnp.ndarray y = np.empty_like(xf)
    cdef double[::1] xv = xf
    cdef double[::1] yv = y
    cdef Py_ssize_t i, n = xv.shape[0]
    with nogil:
        for i in range(n):
            yv[i] = xv[i] if xv[i] > 0.0 else 0.0
    return y.reshape((<object> x).shape)


def relu_bwd(cnp.ndarray g, cnp.ndarray x):
    cdef cnp.ndarray gf = np.ascontiguousarray(g).reshape(-1)
    cdef cnp.ndarray xf = x.reshape(-1)
    cdef cnp.ndarray d = np.empty_like(xf)
    cdef double[::1] gv = gf
    cdef double[::1] xv = xf
    cdef double[::1] dv = d
    cdef Py_ssize_t i, n = xv.shape[0]
    with nogil:
        for i in range(n):
            dv[i] = gv[i] if xv[i] > 0.0 else 0.0
    return d.reshape((<object> x).shape)


def elu_fwd(cnp.ndarray x):
    cdef cnp.ndarray xf = x.reshape(-1)
    cdef cnp.ndarray y = np.empty_like(xf)
    cdef double[::1] xv = xf
    cdef double[::1] yv = y
    cdef Py_ssize_t i, n = xv.shape[0]
    with nogil:
        for i in range(n):
            yv[i] = xv[i] if xv[i] > 0.0 else expm1(xv[i])
    return y.reshape((<object> x).shape)


def elu_bwd(cnp.ndarray g, cnp.ndarray x, cnp.ndarray y):
    cdef cnp.ndarray gf = np.ascontiguousarray(g).reshape(-1)
    cdef cnp.ndarray xf = x.reshape(-1)
    cdef cnp.ndarray yf = y.reshape(-1)
    cdef cnp.ndarray d = np.empty_like(xf)
    cdef double[::1] gv = gf
    cdef double[::1] xv = xf
    cdef double[::1] yv = yf
    cdef double[::1] dv = d
    cdef Py_ssize_t i, n = xv.shape[0]
    with nogil:
        for i in range(n):
            dv[i] = gv[i] if xv[i] > 0.0 else gv[i] * (yv[i] + 1.0)
    return d.reshape((<object> x).shape)


def abs_fwd(cnp.ndarray x):
    cdef cnp.ndarray xf = x.reshape(-1)
    cdef cnp.ndarray y = np.empty_like(xf)
    cdef double[::1] xv = xf
    cdef double[::1] yv = y
    cdef Py_ssize_t i, n = xv.shape[0]
    with nogil:
        for i in range(n):
            yv[i] = fabs(xv[i])
    return y.reshape((<object> x).shape)


def abs_bwd(cnp.ndarray g, cnp.ndarray x):
    cdef cnp.ndarray gf = np.ascontiguousarray(g).reshape(-1)
    cdef cnp.ndarray xf = x.reshape(-1)
    cdef cnp.ndarray d = np.empty_like(xf)
    cdef double[::1] gv = gf
    cdef double[::1] xv = xf
    cdef double[::1] dv = d
    cdef Py_ssize_t i, n = xv.shape[0]
    with nogil:
        for i in range(n):
            if xv[i] > 0.0:
                dv[i] = gv[i]
            elif xv[i] < 0.0:
                dv[i] = -gv[i]
            else:
                dv[i] = 0.0
    return d.reshape((<object> x).shape)


# -------------------------------------------------------------- optimizers


def adam_step(cnp.ndarray p, cnp.ndarray g, cnp.ndarray m, cnp.ndarray v,
              int t, double lr, double beta1, double beta2, double eps):
    cdef double[::1] pv = p.reshape(-1)
    cdef double[::1] gv = g.reshape(-1)
    cdef double[::1] mv = m.reshape(-1)
    cdef double[::1] vv = v.reshape(-1)
    cdef Py_ssize_t i, n = pv.shape[0]
    cdef double bc1 = 1.0 - pow(beta1, t)
    cdef double bc2 = 1.0 - pow(beta2, t)
    cdef double m_hat, v_hat
    with nogil:
        for i in range(n):
            mv[i] = beta1 * mv[i] + (1.0 - beta1) * gv[i]
            vv[i] = beta2 * vv[i] + (1.0 - beta2) * gv[i] * gv[i]
            m_hat = mv[i] / bc1
            v_hat = vv[i] / bc2
            pv[i] -= lr * m_hat / (sqrt(v_hat) + eps)


def rmsprop_step(cnp.ndarray p, cnp.ndarray g, cnp.ndarray sq,
                 double lr, double smoothing, double eps):
    cdef double[::1] pv = p.reshape(-1)
    cdef double[::1] gv = g.reshape(-1)
    cdef double[::1] sv = sq.reshape(-1)
    cdef Py_ssize_t i, n = pv.shape[0]
    with nogil:
        for i in range(n):
            sv[i] = smoothing * sv[i] + (1.0 - smoothing) * gv[i] * gv[i]
            pv[i] -= lr * gv[i] / (sqrt(sv[i]) + eps)
