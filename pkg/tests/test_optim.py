"""Optimizers: frozen one-step oracles, trajectory checks, grad_check."""

import numpy as np
import pytest

from cadp import autograd as ag
from cadp.errors import UsageError
from cadp.nn import ParameterSet
from cadp.optim import Adam, RMSProp, grad_check, make_optimizer


def single_param(value):
    params = ParameterSet()
    t = params.add("p", np.array([value]))
    return params, t


def test_adam_first_step_oracle():
    # hand calculation: m=0.1, v=1e-3, bias-corrected to 1 and 1,
    # step = -lr * 1/(sqrt(1)+eps) = -5e-4/(1+1e-8)
    params, t = single_param(0.0)
    t.grad = np.array([1.0])
    Adam(params, lr=5e-4).step()
    expected = -5e-4 / (1.0 + 1e-8)
    assert abs(t.data[0] - expected) < 1e-18
    assert abs(t.data[0] + 5e-4) < 1e-7


def test_rmsprop_first_step_oracle():
    # sq = 0.01*1, step = -lr/(sqrt(0.01)+eps) = -5e-4/0.10001
    params, t = single_param(0.0)
    t.grad = np.array([1.0])
    RMSProp(params, lr=5e-4, smoothing=0.99, eps=1e-5).step()
    expected = -5e-4 / (np.sqrt((1.0 - 0.99) * 1.0) + 1e-5)
    assert abs(t.data[0] - expected) < 1e-16
    assert abs(t.data[0] + 0.0049995) < 1e-10


def test_adam_two_steps_match_straightline_reference():
    # independent reimplementation of two updates with varying gradients
    params, t = single_param(0.3)
    opt = Adam(params, lr=1e-2)
    grads = [0.7, -1.3]

    p = 0.3
    m = v = 0.0
    for step, g in enumerate(grads, start=1):
        t.grad = np.array([g])
        opt.step()
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        m_hat = m / (1.0 - 0.9 ** step)
        v_hat = v / (1.0 - 0.999 ** step)
        p -= 1e-2 * m_hat / (np.sqrt(v_hat) + 1e-8)
    np.testing.assert_allclose(t.data, [p], rtol=0, atol=1e-16)


def test_adam_descends_quadratic():
    # minimize (p-2)^2; 1000 steps at lr 0.05 should get close
    params, t = single_param(10.0)
    opt = Adam(params, lr=0.05)
    for _ in range(1000):
        params.zero_grads()
        loss = ag.sum_all(ag.mul(ag.add_const(t, -2.0), ag.add_const(t, -2.0)))
        ag.backward(loss)
        opt.step()
    assert abs(t.data[0] - 2.0) < 1e-6


def test_step_without_gradient_raises():
    params, _ = single_param(0.0)
    with pytest.raises(UsageError):
        Adam(params).step()


def test_make_optimizer_names():
    params, _ = single_param(0.0)
    assert isinstance(make_optimizer("adam", params, 1e-3), Adam)
    assert isinstance(make_optimizer("rmsprop", params, 1e-3), RMSProp)
    with pytest.raises(UsageError):
        make_optimizer("sgd", params, 1e-3)


def test_optimizer_state_roundtrip():
    params, t = single_param(0.0)
    opt = Adam(params, lr=1e-3)
    t.grad = np.array([0.5])
    opt.step()
    state = opt.state_dict()

    params2, t2 = single_param(float(t.data[0]))
    opt2 = Adam(params2, lr=1e-3)
    opt2.load_state_dict(state)
    t.grad = np.array([-0.25])
    t2.grad = np.array([-0.25])
    opt.step()
    opt2.step()
    np.testing.assert_array_equal(t.data, t2.data)


def test_grad_check_full_sweep_small_graph():
    rng = np.random.default_rng(0)
    params = ParameterSet()
    w = params.add("w", rng.normal(size=(3, 4)))
    x = ag.constant(rng.normal(size=(2, 4)))

    def fn():
        return ag.sum_all(ag.relu(ag.linear(x, w)))

    assert grad_check(fn, params, h=1e-6) < 1e-7


def test_grad_check_detects_wrong_gradient(monkeypatch):
    # corrupt the analytic gradient path and confirm the checker notices
    params = ParameterSet()
    w = params.add("w", np.array([[1.0]]))

    def fn():
        doubled = ag.scale(w, 2.0)
        # sabotage: report the downstream gradient as if scale were identity
        out = ag.sum_all(doubled)
        return out

    # honest graph first
    assert grad_check(fn, params, h=1e-6) < 1e-9

    def bad_fn():
        out = ag.Tensor(w.data * 2.0)
        out._parents = (w,)
        out._bwd = lambda g: (g.copy(),)  # wrong: should be 2g
        return ag.sum_all(out)

    assert grad_check(bad_fn, params, h=1e-6) > 0.4


def test_grad_check_coordinate_subsampling_deterministic():
    rng = np.random.default_rng(3)
    params = ParameterSet()
    params.add("w", rng.normal(size=(6, 6)))
    x = ag.constant(rng.normal(size=(2, 6)))

    def fn():
        return ag.sum_all(ag.elu(ag.linear(x, params["w"])))

    a = grad_check(fn, params, h=1e-6, max_coords_per_param=5, rng=np.random.default_rng(42))
    b = grad_check(fn, params, h=1e-6, max_coords_per_param=5, rng=np.random.default_rng(42))
    assert a == b < 1e-7
