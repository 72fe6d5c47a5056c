"""Temporal-difference training with the advice-pruning objective.

One train step: sample an episode batch, unroll the online network
(centralized when advice exchange is on), mix chosen action values into
a team value per step, regress it against the bootstrapped target from
frozen copies of both networks, optionally add the pruning term scaled
by its schedule weight, and take one optimizer step. Target copies sync
every `target_interval` train steps.

The pruning term pushes each agent's confidence row toward its own
one-hot: per real step it sums -log(c_ii + 1e-10) over agents (log
argument capped at 1 so the loss is never negative), normalized like
the TD term by the number of real steps in the batch.
"""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .agent import AgentNet
from .errors import NumericError, UsageError
from .mixers import QmixMixer, VdnMixer
from .nn import ParameterSet
from .optim import make_optimizer

PRUNE_EPS = 1e-10


# -------------------------------------------------------------- schedules


def epsilon_at(step, start=1.0, end=0.05, anneal_steps=50_000):
    """Linear exploration decay from start to end over anneal_steps.

    Both endpoints are returned exactly (no floating-point drift at the
    boundaries); only interior steps interpolate.
    """
    if anneal_steps <= 0 or step >= anneal_steps:
        return end
    if step <= 0:
        return start
    return start + (end - start) * (step / anneal_steps)


def prune_weight(step, start_step, coef):
    """Pruning-loss weight: 0 before start_step, coef from it onward."""
    return float(coef) if step >= start_step else 0.0


# ----------------------------------------------------------------- losses


def _unroll_q(net, batch, steps, advice, collect_conf):
    """Per-step action values over a batch; [B,n,actions] tensors."""
    b, n = batch.obs.shape[0], batch.obs.shape[2]
    hidden = net.init_hidden(b * n)
    q_steps, conf_steps = [], []
    for t in range(steps):
        if advice:
            obs_t = ag.constant(batch.obs[:, t])
            q3, conf, hidden = net.forward_centralized(obs_t, hidden)
            if collect_conf:
                conf_steps.append(conf)
        else:
            flat = ag.constant(batch.obs[:, t].reshape(b * n, -1))
            q2, hidden = net.forward_decentralized(flat, hidden)
            q3 = ag.reshape(q2, (b, n, net.n_actions))
        q_steps.append(q3)
    return q_steps, conf_steps


def _bootstrap_targets(batch, target_net, target_mixer, gamma, advice):
    """y[:, t] = r_t + gamma * (1-done_t) * mixed max of the frozen nets."""
    b, t_len = batch.reward.shape
    with ag.no_grad():
        q_steps, _ = _unroll_q(target_net, batch, t_len + 1, advice, collect_conf=False)
        y = np.empty((b, t_len))
        for t in range(t_len):
            next_q = q_steps[t + 1].data
            masked = np.where(batch.avail[:, t + 1], next_q, -np.inf)
            best = masked.max(axis=2)
            mixed = target_mixer.mix(
                ag.constant(best), ag.constant(batch.state[:, t + 1])
            ).data
            y[:, t] = batch.reward[:, t] + gamma * (1.0 - batch.terminated[:, t]) * mixed
    return y


def compute_td_loss(batch, net, target_net, mixer, target_mixer, gamma, advice=True):
    """Masked mean squared TD error over real steps; returns a scalar tensor."""
    loss, _, _ = td_loss_with_confidences(
        batch, net, target_net, mixer, target_mixer, gamma, advice
    )
    return loss


def td_loss_with_confidences(batch, net, target_net, mixer, target_mixer, gamma, advice=True):
    """TD loss plus the per-step confidence tensors of the online unroll."""
    b, t_len = batch.reward.shape
    n = batch.obs.shape[2]
    mask_total = float(batch.filled.sum())
    if mask_total == 0.0:
        raise UsageError("batch has no real steps")

    q_steps, conf_steps = _unroll_q(net, batch, t_len, advice, collect_conf=True)
    y = _bootstrap_targets(batch, target_net, target_mixer, gamma, advice)

    acc = None
    for t in range(t_len):
        flat_q = ag.reshape(q_steps[t], (b * n, net.n_actions))
        chosen = ag.gather_last(flat_q, batch.actions[:, t].reshape(-1))
        team_q = mixer.mix(ag.reshape(chosen, (b, n)), ag.constant(batch.state[:, t]))
        err = ag.sub(ag.constant(y[:, t]), team_q)
        masked = ag.mul(ag.mul(err, err), ag.constant(batch.filled[:, t]))
        step_sum = ag.sum_all(masked)
        acc = step_sum if acc is None else ag.add(acc, step_sum)
    td = ag.scale(acc, 1.0 / mask_total)

    diag_mean = _mean_diag_confidence(conf_steps, batch.filled)
    return td, conf_steps, diag_mean


def compute_pruning_loss(confidences, filled):
    """Cross-entropy of confidence rows against self one-hots, mask-averaged."""
    mask_total = float(filled.sum())
    if mask_total == 0.0:
        raise UsageError("batch has no real steps")
    if len(confidences) != filled.shape[1]:
        raise UsageError("one confidence matrix per step is required")
    acc = None
    for t, conf in enumerate(confidences):
        diag = ag.diagonal_last2(conf)
        safe = ag.clip_max_const(ag.add_const(diag, PRUNE_EPS), 1.0)
        per_sample = ag.sum_last(ag.log(safe))
        masked = ag.mul(per_sample, ag.constant(filled[:, t]))
        step_sum = ag.sum_all(masked)
        acc = step_sum if acc is None else ag.add(acc, step_sum)
    return ag.scale(acc, -1.0 / mask_total)


def _mean_diag_confidence(conf_steps, filled):
    """Mask-weighted mean of self-confidences; 1.0 when no exchange happens."""
    if not conf_steps:
        return 1.0
    total = float(filled.sum())
    if total == 0.0:
        return 1.0
    acc = 0.0
    for t, conf in enumerate(conf_steps):
        n = conf.data.shape[-1]
        diag = conf.data[:, np.arange(n), np.arange(n)].mean(axis=1)
        acc += float((diag * filled[:, t]).sum())
    return acc / total


# ---------------------------------------------------------------- learner


class Learner:
    """Owns the online/target networks, the mixer pair, and the optimizer."""

    def __init__(self, net, mixer, config, sample_rng):
        self.net = net
        self.mixer = mixer
        self.config = config
        self.sample_rng = sample_rng
        self.train_steps = 0

        self.target_net = AgentNet.build_like(net)
        self.target_net.params.copy_from(net.params)
        if isinstance(mixer, QmixMixer):
            self.target_mixer = QmixMixer.build_like(mixer)
            self.target_mixer.params.copy_from(mixer.params)
        elif isinstance(mixer, VdnMixer):
            self.target_mixer = VdnMixer(mixer.state_dim, mixer.n_agents)
        else:
            raise UsageError(f"unsupported mixer type {type(mixer).__name__}")

        self.train_params = ParameterSet()
        for name, tensor in net.params.items():
            self.train_params.add(f"agent.{name}", tensor)
        for name, tensor in mixer.params.items():
            self.train_params.add(f"mixer.{name}", tensor)
        self.optimizer = make_optimizer(config.optimizer, self.train_params, config.lr)

    def sync_targets(self):
        self.target_net.params.copy_from(self.net.params)
        if isinstance(self.mixer, QmixMixer):
            self.target_mixer.params.copy_from(self.mixer.params)

    def train_step(self, buffer, env_steps):
        """One gradient step from one sampled batch; returns loss metrics."""
        cfg = self.config
        batch = buffer.sample(cfg.batch_size, self.sample_rng)
        advice = cfg.advice

        td, conf_steps, diag_mean = td_loss_with_confidences(
            batch, self.net, self.target_net, self.mixer, self.target_mixer,
            cfg.gamma, advice,
        )
        weight = prune_weight(env_steps, cfg.prune_start_resolved(), cfg.prune_coef)
        if advice and weight != 0.0:
            prune = compute_pruning_loss(conf_steps, batch.filled)
            total = ag.add(td, ag.scale(prune, weight))
            prune_value = prune.item()
        else:
            total = td
            prune_value = 0.0

        total_value = total.item()
        if not np.isfinite(total_value):
            raise NumericError(f"non-finite training loss {total_value!r}")

        self.train_params.zero_grads()
        ag.backward(total)
        grad_norm = self.train_params.grad_norm()
        self.optimizer.step()
        self.train_steps += 1
        if self.train_steps % cfg.target_interval == 0:
            self.sync_targets()

        return {
            "td_loss": td.item(),
            "prune_loss": prune_value,
            "prune_weight": weight,
            "mean_diag_conf": diag_mean,
            "grad_norm": grad_norm,
        }
