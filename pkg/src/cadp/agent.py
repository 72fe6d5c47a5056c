"""Shared-parameter agent network with a prunable advice-exchange stage.

Per-agent trunk: observation encoder (linear + relu) feeding a GRU whose
hidden state tracks the action-observation history. In centralized mode
each agent additionally queries its teammates: query/key/value rows are
linear projections of the raw observations (bias-free), pairwise scaled
dot products are normalized row-wise into a confidence matrix, and each
agent receives the confidence-weighted mix of value rows. The mixed
advice is passed through a linear fusion layer and concatenated with the
GRU state before the action-value head.

Decentralized mode replaces the exchange with the agent's own value row,
which is exactly what the centralized pass computes when its confidence
row is the one-hot on itself. Training drives confidences toward that
one-hot, so the two modes converge to the same policy.

All agents share one parameter set; the agent-id one-hot inside the
observation breaks the symmetry.
"""

from __future__ import annotations

import math

import numpy as np

from . import autograd as ag
from .errors import UsageError
from .nn import GRUCell, Linear, ParameterSet


class AgentNet:
    """Action-value network for all agents, centralized or decentralized."""

    def __init__(self, obs_dim, n_actions, rng=None, hidden_dim=64, attn_dim=32,
                 head_hidden=64):
        self.obs_dim = obs_dim
        self.n_actions = n_actions
        self.hidden_dim = hidden_dim
        self.attn_dim = attn_dim
        self.score_scale = 1.0 / math.sqrt(attn_dim)
        # counts every operation that mixes information across agents;
        # decentralized execution must leave it untouched
        self.cross_agent_calls = 0

        params = ParameterSet()
        self.params = params
        self.encoder = Linear(params, "encoder", obs_dim, hidden_dim, rng=rng)
        self.memory = GRUCell(params, "memory", hidden_dim, hidden_dim, rng=rng)
        self.advice_query = Linear(params, "advice_query", obs_dim, attn_dim, rng=rng, bias=False)
        self.advice_key = Linear(params, "advice_key", obs_dim, attn_dim, rng=rng, bias=False)
        self.advice_value = Linear(params, "advice_value", obs_dim, attn_dim, rng=rng, bias=False)
        self.fuse = Linear(params, "fuse", attn_dim, attn_dim, rng=rng)
        self.head_in = Linear(params, "head_in", hidden_dim + attn_dim, head_hidden, rng=rng)
        self.head_out = Linear(params, "head_out", head_hidden, n_actions, rng=rng)

    @classmethod
    def build_like(cls, other):
        """Same architecture, zero-initialized (values copied separately)."""
        return cls(
            other.obs_dim, other.n_actions, rng=None,
            hidden_dim=other.hidden_dim, attn_dim=other.attn_dim,
            head_hidden=other.head_in.w.data.shape[0],
        )

    def init_hidden(self, rows):
        return ag.constant(np.zeros((rows, self.hidden_dim)))

    # ----------------------------------------------------- building blocks

    def project_qkv(self, obs):
        """Query/key/value rows from raw observations: [r, obs] -> 3x [r, attn]."""
        return (
            self.advice_query(obs),
            self.advice_key(obs),
            self.advice_value(obs),
        )

    def confidence(self, queries, keys):
        """Pairwise advice confidences: ([B,n,d], [B,n,d]) -> scores and row-softmax."""
        self.cross_agent_calls += 1
        scores = ag.attention_scores(queries, keys, self.score_scale)
        return scores, ag.softmax_last(scores)

    def aggregate_advice(self, conf, values):
        """Confidence-weighted mix of value rows: [B,n,n] @ [B,n,d]."""
        self.cross_agent_calls += 1
        return ag.bmm(conf, values)

    def _memory_step(self, obs_rows, hidden):
        return self.memory(ag.relu(self.encoder(obs_rows)), hidden)

    def _q_head(self, hidden, advice_rows):
        fused = self.fuse(advice_rows)
        joined = ag.concat_last(hidden, fused)
        return self.head_out(ag.relu(self.head_in(joined)))

    # ------------------------------------------------------------- forwards

    def forward_centralized(self, obs, hidden, confidence_override=None):
        """Advice-exchange forward pass.

        obs: [B, n, obs_dim] tensor; hidden: [B*n, hidden_dim].
        Returns (q_values [B, n, actions], confidence [B, n, n], hidden').
        The override replaces the confidence matrix (constant, no
        gradient); used to probe the exchange.
        """
        b, n, d = obs.shape
        if d != self.obs_dim:
            raise UsageError(f"obs feature size {d} != {self.obs_dim}")
        flat_obs = ag.reshape(obs, (b * n, d))
        new_hidden = self._memory_step(flat_obs, hidden)

        if confidence_override is None:
            q_rows, k_rows, v_rows = self.project_qkv(flat_obs)
            queries = ag.reshape(q_rows, (b, n, self.attn_dim))
            keys = ag.reshape(k_rows, (b, n, self.attn_dim))
            _, conf = self.confidence(queries, keys)
        else:
            if confidence_override.shape != (b, n, n):
                raise UsageError("confidence override has wrong shape")
            conf = ag.constant(confidence_override)
            v_rows = self.advice_value(flat_obs)
        values = ag.reshape(v_rows, (b, n, self.attn_dim))
        advice = self.aggregate_advice(conf, values)

        q = self._q_head(new_hidden, ag.reshape(advice, (b * n, self.attn_dim)))
        return ag.reshape(q, (b, n, self.n_actions)), conf, new_hidden

    def forward_decentralized(self, obs, hidden):
        """Message-free forward pass over independent agent rows.

        obs: [r, obs_dim] tensor of single-agent observations; each row is
        processed in isolation (the interface carries no teammate data).
        Returns (q_values [r, actions], hidden').
        """
        if obs.shape[-1] != self.obs_dim:
            raise UsageError(f"obs feature size {obs.shape[-1]} != {self.obs_dim}")
        new_hidden = self._memory_step(obs, hidden)
        own_value = self.advice_value(obs)
        q = self._q_head(new_hidden, own_value)
        return q, new_hidden


def select_actions(q_values, avail, epsilon, rng):
    """Per-agent epsilon-greedy with availability masking.

    q_values, avail: [n, actions]; greedy ties resolve to the lowest
    index. Draws a fixed number of random values regardless of epsilon so
    RNG streams stay aligned across schedules.
    """
    q_values = np.asarray(q_values, dtype=np.float64)
    avail = np.asarray(avail, dtype=bool)
    if q_values.shape != avail.shape:
        raise UsageError("q_values and avail shapes differ")
    if not avail.any(axis=1).all():
        raise UsageError("an agent has no available action")

    n = q_values.shape[0]
    explore = rng.random(n) < epsilon
    picks = rng.random(n)
    masked = np.where(avail, q_values, -np.inf)
    actions = masked.argmax(axis=1)
    for i in range(n):
        if explore[i]:
            options = np.flatnonzero(avail[i])
            actions[i] = options[int(picks[i] * options.size)]
    return actions
