"""Episode storage: whole-episode FIFO replay with padded batch assembly."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UsageError


@dataclass
class Episode:
    """One complete episode.

    obs/avail carry length+1 entries (the post-step observation set is
    included); actions/reward/terminated carry one entry per step.
    """

    obs: np.ndarray        # [T+1, n_agents, obs_dim]
    state: np.ndarray      # [T+1, state_dim]
    actions: np.ndarray    # [T, n_agents] int64
    reward: np.ndarray     # [T]
    terminated: np.ndarray  # [T] float 0/1
    avail: np.ndarray      # [T+1, n_agents, n_actions] bool

    @property
    def length(self):
        return self.reward.shape[0]


@dataclass
class EpisodeBatch:
    """Padded stack of episodes; filled marks real steps (prefix mask)."""

    obs: np.ndarray        # [B, T+1, n_agents, obs_dim]
    state: np.ndarray      # [B, T+1, state_dim]
    actions: np.ndarray    # [B, T, n_agents]
    reward: np.ndarray     # [B, T]
    terminated: np.ndarray  # [B, T]
    avail: np.ndarray      # [B, T+1, n_agents, n_actions]
    filled: np.ndarray     # [B, T]

    @property
    def batch_size(self):
        return self.reward.shape[0]

    @property
    def max_length(self):
        return self.reward.shape[1]


class ReplayBuffer:
    """Fixed-capacity FIFO of complete episodes with uniform sampling."""

    def __init__(self, capacity, spec):
        if capacity < 1:
            raise UsageError("capacity must be positive")
        self.capacity = capacity
        self.spec = spec
        self._episodes = []
        self.insert_count = 0

    def __len__(self):
        return len(self._episodes)

    def can_sample(self, batch_size):
        return len(self._episodes) >= batch_size

    def insert(self, episode):
        self._validate(episode)
        self._episodes.append(episode)
        self.insert_count += 1
        if len(self._episodes) > self.capacity:
            self._episodes.pop(0)

    def episodes(self):
        """Oldest-first view of current contents (used by persistence)."""
        return list(self._episodes)

    def _validate(self, ep):
        s = self.spec
        t = ep.length
        if t < 1:
            raise UsageError("empty episode")
        if t > s.episode_limit:
            raise UsageError(f"episode length {t} exceeds limit {s.episode_limit}")
        expected = {
            "obs": (t + 1, s.n_agents, s.obs_dim),
            "state": (t + 1, s.state_dim),
            "actions": (t, s.n_agents),
            "reward": (t,),
            "terminated": (t,),
            "avail": (t + 1, s.n_agents, s.n_actions),
        }
        for name, shape in expected.items():
            arr = getattr(ep, name)
            if arr.shape != shape:
                raise UsageError(f"episode field {name} has shape {arr.shape}, expected {shape}")
        if not (ep.terminated[-1] or t == s.episode_limit):
            raise UsageError("episode is not complete (no termination and below the limit)")
        if ep.terminated[:-1].any():
            raise UsageError("terminated flag set before the final step")
        steps = np.arange(t)[:, None]
        agents = np.arange(s.n_agents)[None, :]
        if not ep.avail[steps, agents, ep.actions].all():
            raise UsageError("an episode action was not available per its mask")

    def sample(self, batch_size, rng):
        """Uniform sample without replacement, padded to the longest episode."""
        if not self.can_sample(batch_size):
            raise UsageError(
                f"buffer holds {len(self._episodes)} episodes, cannot sample {batch_size}"
            )
        idx = rng.choice(len(self._episodes), size=batch_size, replace=False)
        chosen = [self._episodes[i] for i in idx]
        s = self.spec
        t_max = max(ep.length for ep in chosen)
        b = batch_size

        obs = np.zeros((b, t_max + 1, s.n_agents, s.obs_dim))
        state = np.zeros((b, t_max + 1, s.state_dim))
        actions = np.zeros((b, t_max, s.n_agents), dtype=np.int64)
        reward = np.zeros((b, t_max))
        terminated = np.zeros((b, t_max))
        avail = np.zeros((b, t_max + 1, s.n_agents, s.n_actions), dtype=bool)
        filled = np.zeros((b, t_max))

        for row, ep in enumerate(chosen):
            t = ep.length
            obs[row, : t + 1] = ep.obs
            state[row, : t + 1] = ep.state
            actions[row, :t] = ep.actions
            reward[row, :t] = ep.reward
            terminated[row, :t] = ep.terminated
            avail[row, : t + 1] = ep.avail
            # padding steps expose a dummy first action so downstream
            # maxima stay finite; the filled mask removes them from losses
            avail[row, t + 1 :, :, 0] = True
            filled[row, :t] = 1.0
        return EpisodeBatch(obs, state, actions, reward, terminated, avail, filled)
