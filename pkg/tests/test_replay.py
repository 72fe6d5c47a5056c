"""Episode replay buffer: FIFO behaviour, validation, padded sampling."""

import numpy as np
import pytest

from cadp.envs.base import EnvSpec
from cadp.errors import UsageError
from cadp.replay import Episode, ReplayBuffer

SPEC = EnvSpec(n_agents=2, n_actions=3, obs_dim=4, state_dim=5, episode_limit=3)


def make_episode(spec, length, rng, reward_tag=None, avail=None):
    """A valid episode of the given length; reward_tag marks identity."""
    if avail is None:
        avail = np.ones((length + 1, spec.n_agents, spec.n_actions), dtype=bool)
    actions = np.empty((length, spec.n_agents), dtype=np.int64)
    for t in range(length):
        for i in range(spec.n_agents):
            options = np.flatnonzero(avail[t, i])
            actions[t, i] = options[rng.integers(options.size)]
    terminated = np.zeros(length)
    if length < spec.episode_limit or rng.random() < 0.5:
        terminated[-1] = 1.0
    reward = rng.normal(size=length)
    if reward_tag is not None:
        reward[0] = reward_tag
    return Episode(
        obs=rng.normal(size=(length + 1, spec.n_agents, spec.obs_dim)),
        state=rng.normal(size=(length + 1, spec.state_dim)),
        actions=actions,
        reward=reward,
        terminated=terminated,
        avail=avail,
    )


def test_insert_len_and_episode_length():
    rng = np.random.default_rng(0)
    buf = ReplayBuffer(capacity=4, spec=SPEC)
    assert len(buf) == 0 and not buf.can_sample(1)
    ep = make_episode(SPEC, 2, rng)
    assert ep.length == 2
    buf.insert(ep)
    assert len(buf) == 1 and buf.can_sample(1) and not buf.can_sample(2)


def test_fifo_eviction_keeps_newest():
    rng = np.random.default_rng(1)
    buf = ReplayBuffer(capacity=3, spec=SPEC)
    for tag in range(5):
        buf.insert(make_episode(SPEC, 1, rng, reward_tag=float(tag)))
    assert len(buf) == 3
    assert buf.insert_count == 5
    tags = [ep.reward[0] for ep in buf.episodes()]
    assert tags == [2.0, 3.0, 4.0]  # oldest two evicted, order preserved


def test_validation_rejects_bad_episodes():
    rng = np.random.default_rng(2)
    buf = ReplayBuffer(capacity=4, spec=SPEC)

    wrong_obs = make_episode(SPEC, 2, rng)
    wrong_obs.obs = wrong_obs.obs[:, :, :3]
    with pytest.raises(UsageError):
        buf.insert(wrong_obs)

    incomplete = make_episode(SPEC, 2, rng)
    incomplete.terminated[:] = 0.0
    with pytest.raises(UsageError):
        buf.insert(incomplete)

    early_stop = make_episode(SPEC, 3, rng)
    early_stop.terminated[:] = 0.0
    early_stop.terminated[0] = 1.0
    with pytest.raises(UsageError):
        buf.insert(early_stop)

    too_long = make_episode(
        EnvSpec(n_agents=2, n_actions=3, obs_dim=4, state_dim=5, episode_limit=4),
        4, rng,
    )
    with pytest.raises(UsageError):
        buf.insert(too_long)

    masked = np.ones((2, SPEC.n_agents, SPEC.n_actions), dtype=bool)
    masked[0, 1, :] = [True, False, True]
    bad_action = make_episode(SPEC, 1, rng, avail=masked)
    bad_action.actions[0, 1] = 1  # not available
    with pytest.raises(UsageError):
        buf.insert(bad_action)

    # full-limit episode without termination is legal
    rollout = make_episode(SPEC, 3, rng)
    rollout.terminated[:] = 0.0
    buf.insert(rollout)


def test_capacity_must_be_positive_and_sampling_guarded():
    with pytest.raises(UsageError):
        ReplayBuffer(capacity=0, spec=SPEC)
    rng = np.random.default_rng(3)
    buf = ReplayBuffer(capacity=4, spec=SPEC)
    buf.insert(make_episode(SPEC, 1, rng))
    with pytest.raises(UsageError):
        buf.sample(2, rng)


def test_sample_without_replacement_covers_buffer():
    rng = np.random.default_rng(4)
    buf = ReplayBuffer(capacity=10, spec=SPEC)
    for tag in range(10):
        buf.insert(make_episode(SPEC, 1, rng, reward_tag=float(tag)))
    batch = buf.sample(10, np.random.default_rng(5))
    assert sorted(batch.reward[:, 0].tolist()) == [float(t) for t in range(10)]


def test_sampling_is_uniform():
    rng = np.random.default_rng(6)
    buf = ReplayBuffer(capacity=5, spec=SPEC)
    for tag in range(5):
        buf.insert(make_episode(SPEC, 1, rng, reward_tag=float(tag)))
    draw_rng = np.random.default_rng(7)
    counts = np.zeros(5)
    n_draws = 20_000
    for _ in range(n_draws):
        batch = buf.sample(1, draw_rng)
        counts[int(batch.reward[0, 0])] += 1
    freqs = counts / n_draws
    assert np.all(np.abs(freqs - 0.2) < 0.015)


def test_padding_layout_and_masks():
    rng = np.random.default_rng(8)
    buf = ReplayBuffer(capacity=2, spec=SPEC)
    short = make_episode(SPEC, 1, rng, reward_tag=100.0)
    long = make_episode(SPEC, 3, rng, reward_tag=200.0)
    buf.insert(short)
    buf.insert(long)
    batch = buf.sample(2, np.random.default_rng(9))
    assert batch.batch_size == 2 and batch.max_length == 3

    by_tag = {batch.reward[r, 0]: r for r in range(2)}
    r_short, r_long = by_tag[100.0], by_tag[200.0]

    assert batch.filled[r_short].tolist() == [1.0, 0.0, 0.0]
    assert batch.filled[r_long].tolist() == [1.0, 1.0, 1.0]

    # real content is copied verbatim
    np.testing.assert_array_equal(batch.obs[r_short, :2], short.obs)
    np.testing.assert_array_equal(batch.actions[r_long], long.actions)
    np.testing.assert_array_equal(batch.avail[r_long], long.avail)

    # padding: zero observations/rewards, only the dummy first action open
    assert np.all(batch.obs[r_short, 2:] == 0.0)
    assert np.all(batch.reward[r_short, 1:] == 0.0)
    assert np.all(batch.avail[r_short, 2:, :, 0])
    assert not np.any(batch.avail[r_short, 2:, :, 1:])


def test_sampling_does_not_mutate_stored_episodes():
    rng = np.random.default_rng(10)
    buf = ReplayBuffer(capacity=2, spec=SPEC)
    ep = make_episode(SPEC, 2, rng)
    before = ep.obs.copy()
    buf.insert(ep)
    buf.insert(make_episode(SPEC, 3, rng))
    batch = buf.sample(2, np.random.default_rng(11))
    batch.obs[...] = -1.0
    np.testing.assert_array_equal(buf.episodes()[0].obs, before)
