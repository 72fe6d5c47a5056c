"""Acceptance gate: nine pinned criteria, one verdict line each.

Each test prints ``[acceptance] criterion N: PASS|FAIL`` directly to the
terminal (bypassing capture) so a ``pytest -v`` log doubles as the
acceptance report. Criteria 6 and 7 run real 50k-step training sweeps and
dominate the suite's runtime (~1 h on one core).
"""

import math
import time

import numpy as np
import pytest

from cadp import autograd as ag
from cadp.agent import AgentNet
from cadp.config import TrainConfig
from cadp.learner import (
    Learner,
    compute_pruning_loss,
    compute_td_loss,
    epsilon_at,
    prune_weight,
)
from cadp.metrics import read_metrics
from cadp.mixers import QmixMixer, make_mixer
from cadp.nn import ParameterSet
from cadp.optim import grad_check, make_optimizer
from cadp.envs.base import EnvSpec
from cadp.replay import ReplayBuffer
from cadp.runner import run_train
from test_replay import make_episode


def _verdict(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"[acceptance] criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"criterion {number}: {detail}"


# ---------------------------------------------------- 1: gradient suite


def test_criterion_1_gradients_of_full_centralized_graph(capsys):
    spec = EnvSpec(n_agents=2, n_actions=3, obs_dim=8, state_dim=6, episode_limit=3)
    t0 = time.monotonic()
    worst = 0.0
    for rep in range(20):
        rng = np.random.default_rng(1000 + rep)
        net = AgentNet(spec.obs_dim, spec.n_actions, rng=rng,
                       hidden_dim=16, attn_dim=8, head_hidden=16)
        target_net = AgentNet.build_like(net)
        target_net.params.copy_from(net.params)
        mixer = QmixMixer(spec.state_dim, spec.n_agents, rng=rng,
                          embed_dim=8, offset_hidden=8)
        target_mixer = QmixMixer.build_like(mixer)
        target_mixer.params.copy_from(mixer.params)

        buf = ReplayBuffer(capacity=4, spec=spec)
        for length in (3, 2, 3):
            buf.insert(make_episode(spec, length, rng))
        batch = buf.sample(3, rng)

        params = ParameterSet()
        for name, tensor in net.params.items():
            params.add(f"agent.{name}", tensor)
        for name, tensor in mixer.params.items():
            params.add(f"mixer.{name}", tensor)

        def loss_fn():
            return compute_td_loss(batch, net, target_net, mixer, target_mixer,
                                   gamma=0.99, advice=True)

        worst = max(worst, grad_check(loss_fn, params, h=1e-6,
                                      max_coords_per_param=4,
                                      rng=np.random.default_rng(rep)))
    elapsed = time.monotonic() - t0
    ok = worst < 1e-6 and elapsed < 60.0
    _verdict(capsys, 1, ok, f"max rel err {worst:.3e}, {elapsed:.1f}s")


# ---------------------------------------------- 2: confidence invariants


def test_criterion_2_confidence_rows_and_shift_invariance(capsys):
    rng = np.random.default_rng(2)
    n_agents, obs_dim, per_batch, batches = 3, 16, 100, 100
    worst_sum = 0.0
    min_entry = np.inf
    worst_shift = 0.0
    for b in range(batches):
        net = AgentNet(obs_dim, 4, rng=rng, hidden_dim=8, attn_dim=8, head_hidden=8)
        obs = rng.standard_normal((per_batch * n_agents, obs_dim))
        with ag.no_grad():
            q_rows, k_rows, _ = net.project_qkv(ag.constant(obs))
            queries = ag.reshape(q_rows, (per_batch, n_agents, net.attn_dim))
            keys = ag.reshape(k_rows, (per_batch, n_agents, net.attn_dim))
            scores, conf = net.confidence(queries, keys)
            shift = rng.standard_normal((per_batch, n_agents, 1))
            shifted = ag.softmax_last(ag.add(scores, ag.constant(
                np.broadcast_to(shift, scores.shape).copy())))
        worst_sum = max(worst_sum, np.abs(conf.data.sum(axis=-1) - 1.0).max())
        min_entry = min(min_entry, conf.data.min())
        worst_shift = max(worst_shift, np.abs(shifted.data - conf.data).max())
    ok = worst_sum <= 1e-9 and min_entry >= 0.0 and worst_shift <= 1e-12
    _verdict(capsys, 2, ok,
             f"10^4 passes: worst |row sum - 1| {worst_sum:.2e}, "
             f"min entry {min_entry:.2e}, shift dev {worst_shift:.2e}")


# -------------------------------------------- 3: identity-exchange match


def test_criterion_3_identity_confidence_equals_decentralized(capsys):
    rng = np.random.default_rng(3)
    n_agents, obs_dim = 3, 12
    net = AgentNet(obs_dim, 5, rng=rng, hidden_dim=16, attn_dim=8, head_hidden=16)
    eye = np.broadcast_to(np.eye(n_agents), (100, n_agents, n_agents)).copy()
    worst = 0.0
    for _ in range(10):
        obs = rng.standard_normal((100, n_agents, obs_dim))
        hidden = rng.standard_normal((100 * n_agents, net.hidden_dim))
        with ag.no_grad():
            q_c, _, h_c = net.forward_centralized(
                ag.constant(obs), ag.constant(hidden), confidence_override=eye)
            q_d, h_d = net.forward_decentralized(
                ag.constant(obs.reshape(-1, obs_dim)), ag.constant(hidden))
        worst = max(worst,
                    np.abs(q_c.data.reshape(-1, 5) - q_d.data).max(),
                    np.abs(h_c.data - h_d.data).max())
    ok = worst <= 1e-12
    _verdict(capsys, 3, ok, f"10^3 inputs: max |centralized - decentralized| {worst:.2e}")


# ------------------------------------------------- 4: pruning dynamics


def test_criterion_4_pruning_loss_dynamics_and_fixed_points(capsys):
    # analytic fixed points
    eye = np.broadcast_to(np.eye(3), (4, 3, 3)).copy()
    identity_loss = compute_pruning_loss([ag.constant(eye)], np.ones((4, 1))).item()
    uniform = np.full((1, 2, 2), 0.5)
    uniform_loss = compute_pruning_loss([ag.constant(uniform)], np.ones((1, 1))).item()
    uniform_dev = abs(uniform_loss - 2.0 * math.log(2.0))

    # optimizing the pruning loss alone on a frozen random batch must
    # concentrate every confidence row on its own agent
    rng = np.random.default_rng(0)
    n_agents, obs_dim, batch = 3, 32, 8
    net = AgentNet(obs_dim, 4, rng=rng)
    flat_obs = ag.constant(rng.standard_normal((batch * n_agents, obs_dim)))
    filled = np.ones((batch, 1))
    opt = make_optimizer("adam", net.params, lr=5e-4)
    diag_mean = 0.0
    steps_used = 500
    for step in range(500):
        q_rows, k_rows, _ = net.project_qkv(flat_obs)
        _, conf = net.confidence(
            ag.reshape(q_rows, (batch, n_agents, net.attn_dim)),
            ag.reshape(k_rows, (batch, n_agents, net.attn_dim)))
        loss = compute_pruning_loss([conf], filled)
        net.params.zero_grads()
        ag.backward(loss)
        opt.step()
        idx = np.arange(n_agents)
        diag_mean = float(conf.data[:, idx, idx].mean())
        if diag_mean > 0.99:
            steps_used = step + 1
            break
    ok = (diag_mean > 0.99 and identity_loss < 1e-9 and uniform_dev <= 1e-9)
    _verdict(capsys, 4, ok,
             f"diag conf {diag_mean:.4f} after {steps_used} steps, "
             f"identity loss {identity_loss:.2e}, uniform dev {uniform_dev:.2e}")


# -------------------------------------------- 5: IGM and monotonicity


def test_criterion_5_igm_and_monotone_mixing(capsys):
    rng = np.random.default_rng(5)
    n_agents, n_actions, state_dim = 2, 3, 4
    igm_failures = 0
    trials = 200
    for mixer_name in ("vdn", "qmix"):
        mixer = make_mixer(mixer_name, state_dim, n_agents, rng)
        for _ in range(trials):
            q_table = rng.standard_normal((n_agents, n_actions))
            state = rng.standard_normal((1, state_dim))
            greedy = tuple(int(a) for a in q_table.argmax(axis=1))
            best, best_joint = -np.inf, None
            for a0 in range(n_actions):
                for a1 in range(n_actions):
                    chosen = np.array([[q_table[0, a0], q_table[1, a1]]])
                    with ag.no_grad():
                        team = mixer.mix(ag.constant(chosen), ag.constant(state)).item()
                    if team > best:
                        best, best_joint = team, (a0, a1)
            if best_joint != greedy:
                igm_failures += 1

    qmix = QmixMixer(state_dim, n_agents, rng=rng)
    worst_violation = 0.0
    bump = 1e-4
    for _ in range(1000):
        state = ag.constant(rng.standard_normal((1, state_dim)))
        agent_q = rng.standard_normal((1, n_agents))
        which = int(rng.integers(n_agents))
        bumped = agent_q.copy()
        bumped[0, which] += bump
        with ag.no_grad():
            lo = qmix.mix(ag.constant(agent_q), state).item()
            hi = qmix.mix(ag.constant(bumped), state).item()
        worst_violation = max(worst_violation, lo - hi)
    ok = igm_failures == 0 and worst_violation <= 1e-9
    _verdict(capsys, 5, ok,
             f"IGM failures {igm_failures}/{2 * trials}, "
             f"worst monotonicity violation {worst_violation:.2e}")


# ------------------------------------- 6 & 7: scaled training sweeps


def _sweep(env, tmp_dir):
    out = {}
    for advice, key in ((True, "cadp"), (False, "plain")):
        rows = []
        for seed in range(5):
            cfg = TrainConfig(env=env, mixer="qmix", advice=advice,
                              total_steps=50_000, prune_start=35_000,
                              prune_coef=0.5, eval_interval=5_000,
                              eval_episodes=32, seed=seed)
            run_dir = str(tmp_dir / f"{key}_s{seed}")
            t0 = time.monotonic()
            run_train(cfg, run_dir=run_dir)
            wall = time.monotonic() - t0
            final = read_metrics(f"{run_dir}/metrics.csv")[-1]
            rows.append({"wall": wall, **final})
        out[key] = rows
    return out


@pytest.fixture(scope="module")
def climbing_sweep(tmp_path_factory):
    return _sweep("climbing", tmp_path_factory.mktemp("climbing"))


@pytest.fixture(scope="module")
def penalty_sweep(tmp_path_factory):
    return _sweep("penalty,k=-100", tmp_path_factory.mktemp("penalty"))


def test_criterion_6_climbing_advice_then_pruned_execution(capsys, climbing_sweep):
    cadp, plain = climbing_sweep["cadp"], climbing_sweep["plain"]
    mean_c = float(np.mean([r["eval_return_c"] for r in cadp]))
    mean_d = float(np.mean([r["eval_return_d"] for r in cadp]))
    plain_mean = float(np.mean([r["eval_return_d"] for r in plain]))
    min_conf = min(r["mean_diag_conf"] for r in cadp)
    slowest = max(r["wall"] for r in cadp + plain)
    ok = (mean_c >= plain_mean
          and abs(mean_d - mean_c) <= 0.05 * abs(mean_c)
          and min_conf > 0.99
          and slowest < 600.0)
    _verdict(capsys, 6, ok,
             f"C {mean_c:.2f} vs plain {plain_mean:.2f}, D {mean_d:.2f}, "
             f"min diag conf {min_conf:.4f}, slowest seed {slowest:.0f}s")


def test_criterion_7_penalty_avoids_miscoordination(capsys, penalty_sweep):
    cadp, plain = penalty_sweep["cadp"], penalty_sweep["plain"]
    finals_d = [r["eval_return_d"] for r in cadp]
    safe_seeds = sum(1 for r in finals_d if r >= 2.0)
    mean_d = float(np.mean(finals_d))
    plain_mean = float(np.mean([r["eval_return_d"] for r in plain]))
    ok = safe_seeds >= 4 and mean_d >= plain_mean
    _verdict(capsys, 7, ok,
             f"D final returns {finals_d}, safe seeds {safe_seeds}/5, "
             f"mean {mean_d:.2f} vs plain {plain_mean:.2f}")


# ------------------------------------------------ 8: schedule fidelity


def test_criterion_8_schedules_buffer_and_target_sync(capsys):
    eps_ok = (epsilon_at(0) == 1.0
              and epsilon_at(50_000) == 0.05
              and epsilon_at(60_000) == 0.05)
    sigma_ok = (prune_weight(34_999, 35_000, 0.5) == 0.0
                and prune_weight(35_000, 35_000, 0.5) == 0.5)

    spec = EnvSpec(n_agents=2, n_actions=2, obs_dim=3, state_dim=3, episode_limit=1)
    buf = ReplayBuffer(capacity=5000, spec=spec)
    rng = np.random.default_rng(8)
    for tag in range(5003):
        buf.insert(make_episode(spec, 1, rng, reward_tag=float(tag)))
    stored = sorted(ep.reward[0] for ep in buf.episodes())
    fifo_ok = (len(buf) == 5000
               and stored[0] == 3.0 and stored[-1] == 5002.0)

    cfg = TrainConfig(env="climbing", mixer="vdn", target_interval=200,
                      buffer_capacity=64, batch_size=4, total_steps=1000,
                      epsilon_anneal_steps=1000, eval_interval=1000).validate()
    net = AgentNet(spec.obs_dim, spec.n_actions, rng=rng,
                   hidden_dim=4, attn_dim=4, head_hidden=4)
    learner = Learner(net, make_mixer("vdn", spec.state_dim, spec.n_agents, rng),
                      cfg, sample_rng=np.random.default_rng(80))
    small = ReplayBuffer(capacity=8, spec=spec)
    for _ in range(6):
        small.insert(make_episode(spec, 1, rng))

    def targets_synced():
        return all(np.array_equal(tensor.data, learner.target_net.params[name].data)
                   for name, tensor in learner.net.params.items())

    sync_ok = targets_synced()
    for _ in range(199):
        learner.train_step(small, env_steps=0)
    sync_ok = sync_ok and not targets_synced()
    learner.train_step(small, env_steps=0)
    sync_ok = sync_ok and targets_synced() and learner.train_steps == 200

    ok = eps_ok and sigma_ok and fifo_ok and sync_ok
    _verdict(capsys, 8, ok,
             f"epsilon endpoints {eps_ok}, prune-weight step {sigma_ok}, "
             f"FIFO at 5000 {fifo_ok}, target sync at 200 {sync_ok}")


# ------------------------------------------- 9: determinism and resume


def test_criterion_9_seed_determinism_and_bit_identical_resume(capsys, tmp_path):
    kw = dict(env="climbing", mixer="qmix", advice=True, total_steps=600,
              eval_interval=200, eval_episodes=8, buffer_capacity=100,
              batch_size=16, epsilon_anneal_steps=400, prune_start=450, seed=7)

    run_train(TrainConfig(**kw), run_dir=str(tmp_path / "a"))
    run_train(TrainConfig(**kw), run_dir=str(tmp_path / "b"))
    bytes_a = (tmp_path / "a" / "metrics.csv").read_bytes()
    same_seed_ok = bytes_a == (tmp_path / "b" / "metrics.csv").read_bytes()

    half = TrainConfig(**{**kw, "total_steps": 300})
    run_train(half, run_dir=str(tmp_path / "half"))
    run_train(TrainConfig(**kw), run_dir=str(tmp_path / "resumed"),
              resume_from=str(tmp_path / "half" / "latest.ckpt"))

    full_rows = read_metrics(str(tmp_path / "a" / "metrics.csv"))
    resumed_rows = read_metrics(str(tmp_path / "resumed" / "metrics.csv"))
    tail = [r for r in full_rows if r["step"] > 300]
    resumed_tail = [r for r in resumed_rows if r["step"] > 300]
    resume_rows_ok = tail == resumed_tail

    from cadp.checkpoint import load_records
    full_ck = load_records(str(tmp_path / "a" / "final.ckpt"))
    res_ck = load_records(str(tmp_path / "resumed" / "final.ckpt"))
    resume_state_ok = set(full_ck) == set(res_ck) and all(
        np.array_equal(v, res_ck[k]) if isinstance(v, np.ndarray) else v == res_ck[k]
        for k, v in full_ck.items())

    ok = same_seed_ok and resume_rows_ok and resume_state_ok
    _verdict(capsys, 9, ok,
             f"same-seed bytes {same_seed_ok}, resumed rows {resume_rows_ok}, "
             f"resumed final state {resume_state_ok}")
