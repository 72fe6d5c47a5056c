"""Compare the pure-Python and compiled kernel backends.

Times each hot kernel on training-shaped inputs and a complete
train step end to end, then prints a speedup table plus the maximum
numeric deviation between the two implementations.

Usage: python3 benchmarks/bench_backends.py [--repeats N] [--batch B]
"""

import argparse
import sys
import time

import numpy as np

from cadp import backend
from cadp.agent import AgentNet
from cadp.config import TrainConfig
from cadp.envs.base import EnvSpec
from cadp.learner import Learner
from cadp.mixers import make_mixer
from cadp.replay import ReplayBuffer


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_cases(batch):
    """(name, args-builder) for each kernel, sized like real training."""
    r = np.random.default_rng(0)
    rows = batch * 3          # batch x agents
    obs_dim, hid, attn = 12, 64, 32
    x = r.normal(size=(rows, obs_dim))
    h = r.normal(size=(rows, hid))
    w_r, w_z, w_h = (r.normal(size=(hid, obs_dim)) for _ in range(3))
    u_r, u_z, u_h = (r.normal(size=(hid, hid)) for _ in range(3))
    b_r, b_z, b_h = (r.normal(size=hid) for _ in range(3))
    big_x = r.normal(size=(rows, hid))
    big_w = r.normal(size=(hid, hid))
    big_b = r.normal(size=hid)
    big_g = r.normal(size=(rows, hid))
    q3 = r.normal(size=(batch, 3, attn))
    k3 = r.normal(size=(batch, 3, attn))
    conf = r.normal(size=(batch, 3, 3))
    v3 = r.normal(size=(batch, 3, attn))
    soft = r.normal(size=(batch * 3, 3))
    scale = 1.0 / np.sqrt(attn)

    gru_fwd_out = None

    def gru_fwd(k):
        nonlocal gru_fwd_out
        gru_fwd_out = k.gru_fwd(x, h, w_r, w_z, w_h, u_r, u_z, u_h, b_r, b_z, b_h)
        return gru_fwd_out

    return [
        ("linear_fwd", lambda k: k.linear_fwd(big_x, big_w, big_b)),
        ("linear_bwd", lambda k: k.linear_bwd(big_g, big_x, big_w, True)),
        ("gru_fwd", gru_fwd),
        ("gru_bwd", lambda k: k.gru_bwd(
            big_g, x, h, gru_fwd_out[1], gru_fwd_out[2], gru_fwd_out[3],
            w_r, w_z, w_h, u_r, u_z, u_h,
        )),
        ("softmax_fwd", lambda k: k.softmax_fwd(soft)),
        ("attn_scores_fwd", lambda k: k.attn_scores_fwd(q3, k3, scale)),
        ("attn_scores_bwd", lambda k: k.attn_scores_bwd(conf, q3, k3, scale)),
        ("bmm_fwd", lambda k: k.bmm_fwd(conf, v3)),
        ("relu_fwd", lambda k: k.relu_fwd(big_x)),
    ]


def bench_kernels(repeats, batch):
    import cadp._kernels_py as pyk
    try:
        import cadp._kernels_cy as cyk
    except ImportError:
        print("compiled backend unavailable; nothing to compare")
        return False

    print(f"{'kernel':<18} {'python':>12} {'compiled':>12} "
          f"{'speedup':>8} {'max |diff|':>12}")
    print("-" * 68)
    for name, call in kernel_cases(batch):
        out_py = call(pyk)
        t_py = timeit(lambda: call(pyk), repeats)
        out_cy = call(cyk)
        t_cy = timeit(lambda: call(cyk), repeats)
        if isinstance(out_py, tuple):
            dev = max(
                float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
                for a, b in zip(out_py, out_cy)
            )
        else:
            dev = float(np.max(np.abs(np.asarray(out_py) - np.asarray(out_cy))))
        print(f"{name:<18} {t_py * 1e6:>10.1f}us {t_cy * 1e6:>10.1f}us "
              f"{t_py / t_cy:>7.2f}x {dev:>12.3e}")
    return True


def bench_train_step(repeats, batch):
    sys.path.insert(0, "tests")
    spec = EnvSpec(n_agents=3, n_actions=5, obs_dim=12, state_dim=10,
                   episode_limit=8)
    from test_replay import make_episode  # reuse the episode factory

    cfg = TrainConfig(
        mixer="qmix", batch_size=batch, buffer_capacity=max(64, batch),
        total_steps=1000, eval_interval=1000,
    ).validate()

    results = {}
    for name in ("python", "compiled"):
        try:
            backend.use(name)
        except Exception:
            print(f"{name} backend unavailable, skipping")
            continue
        try:
            rng = np.random.default_rng(0)
            net = AgentNet(spec.obs_dim, spec.n_actions, rng=rng)
            mixer = make_mixer("qmix", spec.state_dim, spec.n_agents, rng)
            learner = Learner(net, mixer, cfg, np.random.default_rng(1))
            buf = ReplayBuffer(cfg.buffer_capacity, spec)
            fill = np.random.default_rng(2)
            for _ in range(max(64, batch)):
                buf.insert(make_episode(spec, int(fill.integers(1, 9)), fill))
            learner.train_step(buf, env_steps=900)  # warm up
            t = timeit(lambda: learner.train_step(buf, env_steps=900), repeats)
            results[name] = t
        finally:
            backend.use("auto")

    print()
    for name, t in results.items():
        print(f"train_step[{name:>8}]  {t * 1e3:8.2f} ms")
    if len(results) == 2:
        print(f"end-to-end speedup: {results['python'] / results['compiled']:.2f}x")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=30)
    parser.add_argument("--batch", type=int, default=32)
    args = parser.parse_args(argv)
    if bench_kernels(args.repeats, args.batch):
        bench_train_step(max(3, args.repeats // 5), args.batch)
    return 0


if __name__ == "__main__":
    sys.exit(main())
