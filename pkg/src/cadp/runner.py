"""Training harness: rollouts, evaluation, persistence, run comparison.

A run directory holds `config.cfg` (the exact configuration), a
`metrics.csv` with one row per evaluation point, `latest.ckpt`
(refreshed at every evaluation point) and `final.ckpt`. Checkpoints
capture the complete training state — parameters, target copies,
optimizer slots, replay contents, RNG streams, counters — so a resumed
run continues the original trajectory bit for bit.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields as dataclass_fields

import numpy as np

from . import autograd as ag
from .agent import AgentNet, select_actions
from .checkpoint import (
    load_records,
    pack_buffer,
    pack_optimizer,
    pack_params,
    pack_rng,
    save_records,
    unpack_buffer,
    unpack_optimizer,
    unpack_params,
    unpack_rng,
)
from .config import TrainConfig, parse_config_text
from .envs import make_env
from .errors import CadpError, ConfigurationError, UsageError
from .learner import Learner, epsilon_at, prune_weight
from .metrics import MetricsWriter, read_metrics
from .mixers import make_mixer
from .replay import Episode, ReplayBuffer

MODE_CENTRALIZED = "C"
MODE_DECENTRALIZED = "D"
WIN_TOLERANCE = 1e-9

_COMPARE_COLUMNS = ("eval_return_c", "eval_return_d", "eval_win_c", "eval_win_d")


# ------------------------------------------------------------ run directories


def run_root():
    return os.environ.get("CADP_RUN_ROOT", "runs")


def _sanitize(text):
    return "".join(ch if ch.isalnum() else "-" for ch in text)


def allocate_run_dir(config, run_dir=None):
    """Create and return the run directory (collision-safe when auto-named)."""
    if run_dir is not None:
        os.makedirs(run_dir, exist_ok=True)
        return run_dir
    base = run_root()
    os.makedirs(base, exist_ok=True)
    stem = f"{_sanitize(config.env)}_{config.mixer}_seed{config.seed}"
    candidate = os.path.join(base, stem)
    suffix = 1
    while True:
        try:
            os.makedirs(candidate, exist_ok=False)
            return candidate
        except FileExistsError:
            suffix += 1
            candidate = os.path.join(base, f"{stem}-{suffix}")


# ----------------------------------------------------------------- rollouts


def rollout_episode(env, net, epsilon, action_rng, env_seed, centralized):
    """Play one episode; returns (Episode, undiscounted return)."""
    spec = env.spec
    state, obs_set = env.reset(seed=env_seed)
    obs_list = [obs_set.obs.copy()]
    avail_list = [obs_set.avail.copy()]
    state_list = [np.asarray(state, dtype=np.float64).copy()]
    actions_list, reward_list, term_list = [], [], []

    hidden = net.init_hidden(spec.n_agents)
    terminated = False
    with ag.no_grad():
        while not terminated:
            if centralized:
                q3, _, hidden = net.forward_centralized(
                    ag.constant(obs_list[-1][None]), hidden
                )
                q = q3.data[0]
            else:
                q2, hidden = net.forward_decentralized(
                    ag.constant(obs_list[-1]), hidden
                )
                q = q2.data
            actions = select_actions(q, avail_list[-1], epsilon, action_rng)
            outcome = env.step(actions)
            actions_list.append(actions)
            reward_list.append(outcome.reward)
            term_list.append(1.0 if outcome.terminated else 0.0)
            obs_list.append(outcome.observations.obs.copy())
            avail_list.append(outcome.observations.avail.copy())
            state_list.append(np.asarray(outcome.state, dtype=np.float64).copy())
            terminated = outcome.terminated or len(reward_list) >= spec.episode_limit

    episode = Episode(
        obs=np.stack(obs_list),
        state=np.stack(state_list),
        actions=np.stack(actions_list).astype(np.int64),
        reward=np.asarray(reward_list, dtype=np.float64),
        terminated=np.asarray(term_list, dtype=np.float64),
        avail=np.stack(avail_list).astype(bool),
    )
    return episode, float(episode.reward.sum())


def _eval_rngs(base_seed, namespace, mode_id, episode_index):
    """Stateless per-episode seeds so evaluation never perturbs training."""
    ss = np.random.SeedSequence(entropy=(base_seed, namespace, mode_id, episode_index))
    env_child, action_child = ss.spawn(2)
    env_seed = int(env_child.generate_state(1, dtype=np.uint64)[0] % (2 ** 63))
    return env_seed, np.random.default_rng(action_child)


def evaluate_policy(env, net, mode, episodes, base_seed, namespace=0):
    """Greedy evaluation; returns (mean return, std, win rate, returns)."""
    if mode not in (MODE_CENTRALIZED, MODE_DECENTRALIZED):
        raise UsageError(f"mode must be {MODE_CENTRALIZED!r} or {MODE_DECENTRALIZED!r}")
    centralized = mode == MODE_CENTRALIZED
    mode_id = 0 if centralized else 1
    exchange_calls_before = net.cross_agent_calls
    returns = np.empty(episodes)
    wins = 0
    for ep in range(episodes):
        env_seed, action_rng = _eval_rngs(base_seed, namespace, mode_id, ep)
        _, ep_return = rollout_episode(
            env, net, epsilon=0.0, action_rng=action_rng,
            env_seed=env_seed, centralized=centralized,
        )
        returns[ep] = ep_return
        if ep_return >= env.optimal_return - WIN_TOLERANCE:
            wins += 1
    if not centralized and net.cross_agent_calls != exchange_calls_before:
        raise CadpError(
            "decentralized evaluation touched the cross-agent exchange path"
        )
    return (
        float(returns.mean()),
        float(returns.std()),
        wins / episodes,
        returns,
    )


# ------------------------------------------------------------ training state


@dataclass
class TrainingState:
    net: AgentNet
    mixer: object
    learner: Learner
    buffer: ReplayBuffer
    env_rng: np.random.Generator
    action_rng: np.random.Generator
    env_steps: int
    episodes: int
    last_train: dict


_IDLE_TRAIN = {"td_loss": 0.0, "prune_loss": 0.0, "prune_weight": 0.0,
               "mean_diag_conf": 1.0, "grad_norm": 0.0}


def _fresh_state(config, spec):
    root = np.random.SeedSequence(config.seed)
    init_ss, env_ss, action_ss, sample_ss = root.spawn(4)
    init_rng = np.random.default_rng(init_ss)
    net = AgentNet(spec.obs_dim, spec.n_actions, rng=init_rng)
    mixer = make_mixer(config.mixer, spec.state_dim, spec.n_agents, init_rng)
    learner = Learner(net, mixer, config, sample_rng=np.random.default_rng(sample_ss))
    buffer = ReplayBuffer(config.buffer_capacity, spec)
    return TrainingState(
        net=net, mixer=mixer, learner=learner, buffer=buffer,
        env_rng=np.random.default_rng(env_ss),
        action_rng=np.random.default_rng(action_ss),
        env_steps=0, episodes=0, last_train=dict(_IDLE_TRAIN),
    )


def save_training_checkpoint(path, config, state):
    records = {}
    records["config"] = config.to_text().encode("utf-8")
    counters = {
        "env_steps": state.env_steps,
        "episodes": state.episodes,
        "train_steps": state.learner.train_steps,
        "last_train": state.last_train,
    }
    records["counters"] = json.dumps(counters, sort_keys=True).encode("utf-8")
    pack_params(records, "agent", state.net.params)
    pack_params(records, "mixer", state.mixer.params)
    pack_params(records, "target_agent", state.learner.target_net.params)
    pack_params(records, "target_mixer", state.learner.target_mixer.params)
    pack_optimizer(records, "opt", state.learner.optimizer)
    pack_rng(records, "env", state.env_rng)
    pack_rng(records, "action", state.action_rng)
    pack_rng(records, "sample", state.learner.sample_rng)
    pack_buffer(records, state.buffer)
    save_records(path, records)


_RESUME_FREE_FIELDS = ("total_steps",)


def _check_resume_config(stored, requested):
    for f in dataclass_fields(TrainConfig):
        if f.name in _RESUME_FREE_FIELDS:
            continue
        if getattr(stored, f.name) != getattr(requested, f.name):
            raise ConfigurationError(
                f"resume config changes {f.name!r} "
                f"({getattr(stored, f.name)!r} -> {getattr(requested, f.name)!r}); "
                f"only {_RESUME_FREE_FIELDS} may differ"
            )


def load_training_checkpoint(path, config, spec):
    """Rebuild the full training state; config may only extend total_steps."""
    records = load_records(path)
    if "config" not in records or "counters" not in records:
        raise ConfigurationError(f"{path} is not a training checkpoint")
    stored = parse_config_text(records["config"].decode("utf-8"))
    _check_resume_config(stored, config)
    counters = json.loads(records["counters"].decode("utf-8"))
    if config.total_steps < counters["env_steps"]:
        raise ConfigurationError(
            f"total_steps={config.total_steps} is below the checkpoint's "
            f"progress ({counters['env_steps']} environment steps)"
        )

    net = AgentNet(spec.obs_dim, spec.n_actions)
    mixer = make_mixer(config.mixer, spec.state_dim, spec.n_agents)
    learner = Learner(net, mixer, config, sample_rng=np.random.default_rng(0))
    unpack_params(records, "agent", net.params)
    unpack_params(records, "mixer", mixer.params)
    unpack_params(records, "target_agent", learner.target_net.params)
    unpack_params(records, "target_mixer", learner.target_mixer.params)
    unpack_optimizer(records, "opt", learner.optimizer)
    learner.train_steps = counters["train_steps"]

    env_rng = np.random.default_rng(0)
    action_rng = np.random.default_rng(0)
    unpack_rng(records, "env", env_rng)
    unpack_rng(records, "action", action_rng)
    unpack_rng(records, "sample", learner.sample_rng)
    buffer = unpack_buffer(records, spec)
    if buffer.capacity != config.buffer_capacity:
        raise ConfigurationError("checkpoint buffer capacity mismatch")

    return TrainingState(
        net=net, mixer=mixer, learner=learner, buffer=buffer,
        env_rng=env_rng, action_rng=action_rng,
        env_steps=counters["env_steps"], episodes=counters["episodes"],
        last_train=dict(counters["last_train"]),
    )


# ------------------------------------------------------------- training loop


def eval_marks(total_steps, interval):
    marks = list(range(interval, total_steps + 1, interval))
    if not marks or marks[-1] != total_steps:
        marks.append(total_steps)
    return marks


def _metrics_row(config, state, env, mark):
    ret_c, _, win_c, _ = evaluate_policy(
        env, state.net, MODE_CENTRALIZED, config.eval_episodes,
        config.seed, namespace=mark,
    )
    ret_d, _, win_d, _ = evaluate_policy(
        env, state.net, MODE_DECENTRALIZED, config.eval_episodes,
        config.seed, namespace=mark,
    )
    return {
        "step": mark,
        "episodes": state.episodes,
        "td_loss": state.last_train["td_loss"],
        "prune_loss": state.last_train["prune_loss"],
        "prune_weight": prune_weight(
            mark, config.prune_start_resolved(), config.prune_coef
        ),
        "epsilon": epsilon_at(
            mark, config.epsilon_start, config.epsilon_end,
            config.epsilon_anneal_steps,
        ),
        "mean_diag_conf": state.last_train["mean_diag_conf"],
        "eval_return_c": ret_c,
        "eval_return_d": ret_d,
        "eval_win_c": win_c,
        "eval_win_d": win_d,
    }


def run_train(config, run_dir=None, resume_from=None):
    """Train to config.total_steps; returns a summary dict."""
    config.validate()
    train_env = make_env(config.env)
    eval_env = make_env(config.env)
    spec = train_env.spec

    if resume_from is not None:
        state = load_training_checkpoint(resume_from, config, spec)
    else:
        state = _fresh_state(config, spec)

    run_dir = allocate_run_dir(config, run_dir)
    with open(os.path.join(run_dir, "config.cfg"), "w", encoding="utf-8") as fh:
        fh.write(config.to_text())
    writer = MetricsWriter(os.path.join(run_dir, "metrics.csv"))
    latest_path = os.path.join(run_dir, "latest.ckpt")

    marks = eval_marks(config.total_steps, config.eval_interval)
    next_mark = sum(1 for m in marks if m <= state.env_steps)

    def flush_marks():
        nonlocal next_mark
        while next_mark < len(marks) and state.env_steps >= marks[next_mark]:
            writer.write_row(_metrics_row(config, state, eval_env, marks[next_mark]))
            next_mark += 1
            save_training_checkpoint(latest_path, config, state)

    flush_marks()  # marks already crossed when resuming with a longer budget
    while state.env_steps < config.total_steps:
        epsilon = epsilon_at(
            state.env_steps, config.epsilon_start, config.epsilon_end,
            config.epsilon_anneal_steps,
        )
        env_seed = int(state.env_rng.integers(2 ** 63))
        episode, _ = rollout_episode(
            train_env, state.net, epsilon, state.action_rng,
            env_seed, centralized=config.advice,
        )
        state.buffer.insert(episode)
        state.env_steps += episode.length
        state.episodes += 1
        if state.buffer.can_sample(config.batch_size):
            state.last_train = state.learner.train_step(state.buffer, state.env_steps)
        flush_marks()

    save_training_checkpoint(os.path.join(run_dir, "final.ckpt"), config, state)
    rows = read_metrics(os.path.join(run_dir, "metrics.csv"))
    return {
        "run_dir": run_dir,
        "env_steps": state.env_steps,
        "episodes": state.episodes,
        "train_steps": state.learner.train_steps,
        "final_row": rows[-1] if rows else None,
    }


# --------------------------------------------------------- standalone tools


def load_policy(checkpoint_path):
    """(config, env, net) rebuilt from a checkpoint, for eval/inspection."""
    records = load_records(checkpoint_path)
    if "config" not in records:
        raise ConfigurationError(f"{checkpoint_path} is not a training checkpoint")
    config = parse_config_text(records["config"].decode("utf-8"))
    env = make_env(config.env)
    net = AgentNet(env.spec.obs_dim, env.spec.n_actions)
    unpack_params(records, "agent", net.params)
    return config, env, net


def run_eval(checkpoint_path, mode, episodes, seed):
    """Evaluate a stored policy; returns a summary dict."""
    _, env, net = load_policy(checkpoint_path)
    mean, std, win_rate, returns = evaluate_policy(
        env, net, mode, episodes, seed, namespace=0,
    )
    return {
        "mode": mode,
        "episodes": episodes,
        "mean_return": mean,
        "std_return": std,
        "win_rate": win_rate,
        "optimal_return": env.optimal_return,
        "returns": returns,
    }


def export_attention(checkpoint_path, episodes, seed, out_path):
    """Dump per-step confidence matrices of greedy rollouts to CSV."""
    _, env, net = load_policy(checkpoint_path)
    n = env.spec.n_agents
    lines = ["episode,step,agent_i,agent_j,confidence"]
    for ep in range(episodes):
        env_seed, action_rng = _eval_rngs(seed, 0, 0, ep)
        state, obs_set = env.reset(seed=env_seed)
        hidden = net.init_hidden(n)
        terminated = False
        step = 0
        with ag.no_grad():
            while not terminated:
                q3, conf, hidden = net.forward_centralized(
                    ag.constant(obs_set.obs[None]), hidden
                )
                matrix = conf.data[0]
                for i in range(n):
                    for j in range(n):
                        lines.append(
                            f"{ep},{step},{i},{j},{'%.17g' % matrix[i, j]}"
                        )
                actions = select_actions(
                    q3.data[0], obs_set.avail, 0.0, action_rng
                )
                outcome = env.step(actions)
                obs_set = outcome.observations
                step += 1
                terminated = outcome.terminated or step >= env.spec.episode_limit
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return {"path": out_path, "episodes": episodes, "rows": len(lines) - 1}


# ---------------------------------------------------------------- comparison


def _group_key(config_text):
    lines = [
        line for line in config_text.splitlines()
        if not line.split("=")[0].strip() == "seed"
    ]
    return "\n".join(lines)


def compare_runs(run_dirs, last_k=1):
    """Aggregate final evaluation scores across runs, grouped by config.

    Runs whose configurations differ only in `seed` form one group; each
    run contributes the mean of its last `last_k` metric rows, and the
    group reports mean and population standard deviation across runs.
    """
    if last_k < 1:
        raise UsageError("last_k must be positive")
    groups = {}
    for run_dir in run_dirs:
        cfg_path = os.path.join(run_dir, "config.cfg")
        try:
            with open(cfg_path, "r", encoding="utf-8") as fh:
                cfg_text = fh.read()
        except OSError as exc:
            raise UsageError(f"{run_dir} has no readable config.cfg: {exc}") from None
        rows = read_metrics(os.path.join(run_dir, "metrics.csv"))
        if len(rows) < last_k:
            raise UsageError(
                f"{run_dir} has {len(rows)} metric rows, need at least {last_k}"
            )
        tail = rows[-last_k:]
        per_run = {
            col: float(np.mean([r[col] for r in tail])) for col in _COMPARE_COLUMNS
        }
        groups.setdefault(_group_key(cfg_text), []).append((run_dir, per_run))

    results = []
    for key, members in groups.items():
        cfg = parse_config_text(key)
        label = f"{cfg.env} | {cfg.mixer} | advice={'on' if cfg.advice else 'off'}"
        entry = {"label": label, "runs": len(members),
                 "run_dirs": [m[0] for m in members]}
        for col in _COMPARE_COLUMNS:
            values = np.array([m[1][col] for m in members])
            entry[f"{col}_mean"] = float(values.mean())
            entry[f"{col}_std"] = float(values.std())  # population std
        results.append(entry)
    results.sort(key=lambda e: e["label"])
    return results


def render_comparison(results):
    """Aligned text table for compare_runs output."""
    header = (
        f"{'configuration':<42} {'runs':>4} "
        f"{'return(C)':>16} {'return(D)':>16} {'win(C)':>7} {'win(D)':>7}"
    )
    lines = [header, "-" * len(header)]
    for entry in results:
        lines.append(
            f"{entry['label']:<42} {entry['runs']:>4} "
            f"{entry['eval_return_c_mean']:>8.3f}±{entry['eval_return_c_std']:<7.3f} "
            f"{entry['eval_return_d_mean']:>8.3f}±{entry['eval_return_d_std']:<7.3f} "
            f"{entry['eval_win_c_mean']:>7.3f} {entry['eval_win_d_mean']:>7.3f}"
        )
    return "\n".join(lines)


def comparison_csv(results):
    cols = ["label", "runs"]
    for col in _COMPARE_COLUMNS:
        cols += [f"{col}_mean", f"{col}_std"]
    lines = [",".join(cols)]
    for entry in results:
        cells = [entry["label"].replace(",", ";"), str(entry["runs"])]
        for col in _COMPARE_COLUMNS:
            cells.append("%.17g" % entry[f"{col}_mean"])
            cells.append("%.17g" % entry[f"{col}_std"])
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
