"""Joint action-value mixers.

Both mixers combine per-agent chosen action values into one team value
while staying monotone in every input, so the team argmax factorizes
into per-agent argmaxes (greedy decentralized execution stays
consistent with the joint greedy choice).

The additive mixer simply sums. The hypernetwork mixer generates
state-conditioned weights whose absolute value is taken to enforce
monotonicity, with an exponential-linear hidden activation and a
two-layer value offset.
"""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .errors import UsageError
from .nn import Linear, ParameterSet


class VdnMixer:
    """Additive decomposition: team value = sum of agent values."""

    def __init__(self, state_dim, n_agents):
        self.state_dim = state_dim
        self.n_agents = n_agents
        self.params = ParameterSet()

    def mix(self, agent_q, state):
        if agent_q.shape[-1] != self.n_agents:
            raise UsageError("agent_q has wrong agent count")
        return ag.sum_last(agent_q)


class QmixMixer:
    """State-conditioned monotone mixer with hypernetwork weights."""

    def __init__(self, state_dim, n_agents, rng=None, embed_dim=32, offset_hidden=32):
        self.state_dim = state_dim
        self.n_agents = n_agents
        self.embed_dim = embed_dim
        params = ParameterSet()
        self.params = params
        self.hyper_w_in = Linear(params, "hyper_w_in", state_dim, n_agents * embed_dim, rng=rng)
        self.hyper_b_in = Linear(params, "hyper_b_in", state_dim, embed_dim, rng=rng)
        self.hyper_w_out = Linear(params, "hyper_w_out", state_dim, embed_dim, rng=rng)
        self.offset_hidden = Linear(params, "offset_hidden", state_dim, offset_hidden, rng=rng)
        self.offset_out = Linear(params, "offset_out", offset_hidden, 1, rng=rng)

    @classmethod
    def build_like(cls, other):
        return cls(
            other.state_dim, other.n_agents, rng=None,
            embed_dim=other.embed_dim,
            offset_hidden=other.offset_hidden.w.data.shape[0],
        )

    def mix(self, agent_q, state):
        """agent_q: [B, n] tensor, state: [B, state_dim] tensor -> [B]."""
        if agent_q.shape[-1] != self.n_agents:
            raise UsageError("agent_q has wrong agent count")
        b = agent_q.shape[0]
        n, e = self.n_agents, self.embed_dim

        w_in = ag.reshape(ag.abs_val(self.hyper_w_in(state)), (b, n, e))
        b_in = ag.reshape(self.hyper_b_in(state), (b, 1, e))
        q_rows = ag.reshape(agent_q, (b, 1, n))
        hidden = ag.elu(ag.add(ag.bmm(q_rows, w_in), b_in))  # [b,1,e]

        w_out = ag.reshape(ag.abs_val(self.hyper_w_out(state)), (b, e, 1))
        mixed = ag.reshape(ag.bmm(hidden, w_out), (b,))

        offset = self.offset_out(ag.relu(self.offset_hidden(state)))
        return ag.add(mixed, ag.reshape(offset, (b,)))


def make_mixer(name, state_dim, n_agents, rng=None):
    if name == "vdn":
        return VdnMixer(state_dim, n_agents)
    if name == "qmix":
        return QmixMixer(state_dim, n_agents, rng=rng)
    raise UsageError(f"unknown mixer {name!r}")


def check_monotonicity(mixer, trials, rng, delta=1e-4, q_scale=3.0):
    """Max monotonicity violation via finite differences.

    Probes random (agent values, state) points, bumps each agent's value
    by delta, and returns the largest clamped negative slope
    max(0, -dQtot/dq_i) seen. Exactly monotone mixers report 0.
    """
    worst = 0.0
    with ag.no_grad():
        for _ in range(trials):
            q = rng.normal(scale=q_scale, size=(1, mixer.n_agents))
            state = rng.normal(size=(1, mixer.state_dim))
            state_t = ag.constant(state)
            base = mixer.mix(ag.constant(q), state_t).item()
            for i in range(mixer.n_agents):
                bumped = q.copy()
                bumped[0, i] += delta
                slope = (mixer.mix(ag.constant(bumped), state_t).item() - base) / delta
                worst = max(worst, -slope)
    return worst
