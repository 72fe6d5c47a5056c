"""Kernel backend parity: the compiled and pure-Python paths must agree."""

import numpy as np
import pytest

from cadp import backend
from cadp import _kernels_py as pyk
from cadp.errors import ConfigurationError

compiled = pytest.importorskip(
    "cadp._kernels_cy", reason="compiled kernel extension is not built"
)

TOL = 1e-10


def rng():
    return np.random.default_rng(1234)


def test_backend_registry_and_switching():
    assert backend.active_name() in ("python", "compiled")
    assert backend.compiled_available()
    backend.use("python")
    assert backend.active_name() == "python"
    assert backend.kernels is pyk
    backend.use("compiled")
    assert backend.active_name() == "compiled"
    assert backend.kernels is compiled
    backend.use("auto")
    assert backend.active_name() == "compiled"  # auto prefers the fast path
    with pytest.raises(ConfigurationError):
        backend.use("fortran")


def _agree(a, b, tol=TOL):
    a, b = np.asarray(a), np.asarray(b)
    assert a.shape == b.shape
    assert np.max(np.abs(a - b)) <= tol


def test_linear_kernels_agree():
    r = rng()
    x, w, b = r.normal(size=(7, 5)), r.normal(size=(4, 5)), r.normal(size=4)
    g = r.normal(size=(7, 4))
    _agree(compiled.linear_fwd(x, w, b), pyk.linear_fwd(x, w, b))
    for got, want in zip(
        compiled.linear_bwd(g, x, w, True), pyk.linear_bwd(g, x, w, True)
    ):
        _agree(got, want)


def test_gru_kernels_agree():
    r = rng()
    rows, in_dim, hid = 6, 5, 8
    x, h = r.normal(size=(rows, in_dim)), r.normal(size=(rows, hid))
    w_r, w_z, w_h = (r.normal(size=(hid, in_dim)) for _ in range(3))
    u_r, u_z, u_h = (r.normal(size=(hid, hid)) for _ in range(3))
    b_r, b_z, b_h = (r.normal(size=hid) for _ in range(3))
    fwd_args = (x, h, w_r, w_z, w_h, u_r, u_z, u_h, b_r, b_z, b_h)
    out_c = compiled.gru_fwd(*fwd_args)
    out_p = pyk.gru_fwd(*fwd_args)
    for got, want in zip(out_c, out_p):
        _agree(got, want)
    _, gate_r, gate_z, cand = out_p
    g = r.normal(size=(rows, hid))
    bwd_args = (g, x, h, gate_r, gate_z, cand, w_r, w_z, w_h, u_r, u_z, u_h)
    for got, want in zip(compiled.gru_bwd(*bwd_args), pyk.gru_bwd(*bwd_args)):
        _agree(got, want)


def test_softmax_kernels_agree():
    r = rng()
    x = r.normal(size=(20, 6)) * 3.0
    y_c, y_p = compiled.softmax_fwd(x), pyk.softmax_fwd(x)
    _agree(y_c, y_p)
    g = r.normal(size=x.shape)
    _agree(compiled.softmax_bwd(g, y_p), pyk.softmax_bwd(g, y_p))


def test_attention_kernels_agree():
    r = rng()
    q, k = r.normal(size=(4, 3, 5)), r.normal(size=(4, 3, 5))
    scale = 1 / np.sqrt(5.0)
    _agree(compiled.attn_scores_fwd(q, k, scale), pyk.attn_scores_fwd(q, k, scale))
    g = r.normal(size=(4, 3, 3))
    for got, want in zip(
        compiled.attn_scores_bwd(g, q, k, scale), pyk.attn_scores_bwd(g, q, k, scale)
    ):
        _agree(got, want)


def test_bmm_kernels_agree():
    r = rng()
    a, b = r.normal(size=(4, 3, 3)), r.normal(size=(4, 3, 5))
    _agree(compiled.bmm_fwd(a, b), pyk.bmm_fwd(a, b))
    g = r.normal(size=(4, 3, 5))
    for got, want in zip(compiled.bmm_bwd(g, a, b), pyk.bmm_bwd(g, a, b)):
        _agree(got, want)


def test_elementwise_kernels_agree():
    r = rng()
    x = r.normal(size=(6, 7))
    g = r.normal(size=(6, 7))
    _agree(compiled.relu_fwd(x), pyk.relu_fwd(x))
    _agree(compiled.relu_bwd(g, x), pyk.relu_bwd(g, x))
    y = pyk.elu_fwd(x)
    _agree(compiled.elu_fwd(x), y)
    _agree(compiled.elu_bwd(g, x, y), pyk.elu_bwd(g, x, y))
    _agree(compiled.abs_fwd(x), pyk.abs_fwd(x))
    _agree(compiled.abs_bwd(g, x), pyk.abs_bwd(g, x))


def test_optimizer_kernels_agree():
    r = rng()
    shape = (5, 4)
    p1 = r.normal(size=shape)
    g = r.normal(size=shape)
    p2 = p1.copy()
    m1, v1 = np.zeros(shape), np.zeros(shape)
    m2, v2 = np.zeros(shape), np.zeros(shape)
    for t in range(1, 6):
        compiled.adam_step(p1, g, m1, v1, t, 1e-3, 0.9, 0.999, 1e-8)
        pyk.adam_step(p2, g, m2, v2, t, 1e-3, 0.9, 0.999, 1e-8)
    _agree(p1, p2)
    _agree(m1, m2)
    _agree(v1, v2)

    p1, p2 = r.normal(size=shape), None
    p2 = p1.copy()
    s1, s2 = np.zeros(shape), np.zeros(shape)
    for _ in range(5):
        compiled.rmsprop_step(p1, g, s1, 1e-3, 0.99, 1e-5)
        pyk.rmsprop_step(p2, g, s2, 1e-3, 0.99, 1e-5)
    _agree(p1, p2)
    _agree(s1, s2)


def test_training_step_agrees_across_backends():
    """A full train step under either backend lands on the same losses."""
    import sys
    sys.path.insert(0, __file__.rsplit("/", 1)[0])
    from test_learner import make_learner

    results = {}
    for name in ("python", "compiled"):
        backend.use(name)
        try:
            learner, buf = make_learner(seed=21)
            out = [learner.train_step(buf, env_steps=900) for _ in range(3)]
            params = {
                n: t.data.copy() for n, t in learner.train_params.items()
            }
            results[name] = (out, params)
        finally:
            backend.use("auto")

    out_py, params_py = results["python"]
    out_cy, params_cy = results["compiled"]
    for a, b in zip(out_py, out_cy):
        for key in a:
            assert a[key] == pytest.approx(b[key], rel=1e-9, abs=1e-12), key
    for name in params_py:
        _agree(params_py[name], params_cy[name], tol=1e-9)


def test_per_backend_determinism():
    for name in ("python", "compiled"):
        backend.use(name)
        try:
            r1 = rng().normal(size=(6, 5))
            x = r1
            first = backend.kernels.softmax_fwd(x)
            second = backend.kernels.softmax_fwd(x.copy())
            assert first.tobytes() == second.tobytes()
        finally:
            backend.use("auto")
