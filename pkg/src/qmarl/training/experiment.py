"""Seeded experiment runs: per-seed metric CSVs plus a summary JSON.

Layout of one experiment directory::

    config.yaml            canonical config that produced the run
    seed_<s>.csv           one row per evaluation (CHSH) or episode (grid tasks)
    seed_<s>.trace.jsonl   optional per-step trace
    params_seed_<s>.*      final parameters (JSON descriptor + binary)
    summary.json           per-seed status and cross-seed statistics

Metric files depend only on (config, seed): wall-clock time is recorded
as 0 unless ``training.timing`` is switched on.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import config as qconfig
from ..envs.chsh import INPUT_PAIRS
from ..envs.coingame import CoinGame
from ..envs.coopnav import CoopNav
from ..errors import DivergenceError
from ..nets import save_snapshot
from ..policies.actors import build_bundle, save_bundle
from ..policies.chsh import ChshPair
from .maa2c import Maa2cConfig, Maa2cOptimiser, maa2c_episode_update, run_episode
from .reinforce import BaselineState, ReinforceConfig, evaluate_chsh, play_round, reinforce_update

log = logging.getLogger(__name__)

COLUMNS = (
    "step_or_episode",
    "win_rate",
    "success_rate",
    "per_pair_00",
    "per_pair_01",
    "per_pair_10",
    "per_pair_11",
    "collisions",
    "episode_length",
    "reward",
    "wall_ms",
)
ROLLING_WINDOW = 100
CONVERGED_FRACTION = 0.25  # per-pair rates "at convergence": last quarter of checkpoints
N_CHECKPOINTS = 10


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


class MetricWriter:
    """Append-only CSV writer with the fixed column set."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = self.path.open("w", newline="")
        self._csv = csv.DictWriter(self._fh, fieldnames=COLUMNS, lineterminator="\n")
        self._csv.writeheader()

    def write(self, row):
        unknown = set(row) - set(COLUMNS)
        if unknown:
            raise KeyError(f"unknown metric columns {sorted(unknown)}")
        self._csv.writerow({c: _fmt(row.get(c)) for c in COLUMNS})

    def close(self):
        self._fh.close()


def read_metrics(path):
    """Rows of a metric CSV as dicts of floats (empty cells become None)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (float(v) if v != "" else None) for k, v in r.items()} for r in rows]


def rolling_mean(values, window=ROLLING_WINDOW):
    """Trailing mean; the first ``window - 1`` entries average what is available."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return values
    # per-window sums: a running cumsum would drift over long series
    sums = np.convolve(values, np.ones(window))[: values.size]
    counts = np.minimum(np.arange(1, values.size + 1), window)
    return sums / counts


class _Clock:
    def __init__(self, enabled):
        self.enabled = enabled
        self._t = time.perf_counter()

    def lap_ms(self):
        if not self.enabled:
            return 0
        now = time.perf_counter()
        ms, self._t = (now - self._t) * 1e3, now
        return round(ms, 3)


def seed_streams(seed):
    """Independent generators for initialisation, training and sampled evaluation."""
    init, train, evaluation = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(init), np.random.default_rng(train), np.random.default_rng(evaluation)


# -- CHSH ------------------------------------------------------------------


def _reinforce_config(cfg):
    c = cfg.chsh
    return ReinforceConfig(c.lr, c.baseline_momentum, c.steps, c.entropy_coeff, c.eval_episodes, c.eval_every, c.sampled_eval)


def _run_chsh_seed(cfg, seed, out, trace):
    init_rng, rng, eval_rng = seed_streams(seed)
    mode = "quantum" if cfg.hybridisation.actor == "quantum" else "classical"
    pair = ChshPair.init(mode, cfg.entanglement, init_rng)
    rcfg = _reinforce_config(cfg)
    clock = _Clock(cfg.training.timing)
    writer = MetricWriter(out / f"seed_{seed}.csv")
    baseline = BaselineState()
    rewards = []
    evals = []

    def evaluate(step):
        if rcfg.sampled_eval:
            ev = evaluate_chsh(pair, rcfg.eval_episodes, eval_rng)
        else:
            ev = evaluate_chsh(pair)
        row = {"step_or_episode": step, "win_rate": ev.win_rate}
        for (x, y), v in ev.per_pair.items():
            row[f"per_pair_{x}{y}"] = v
        row["reward"] = float(np.mean(rewards)) if rewards else None
        row["wall_ms"] = clock.lap_ms()
        writer.write(row)
        evals.append((step, ev))
        rewards.clear()

    try:
        evaluate(0)
        for step in range(1, rcfg.steps + 1):
            rnd = play_round(pair, rng)
            adv = reinforce_update(pair, rnd, baseline, rcfg)
            rewards.append(rnd.reward)
            if trace is not None:
                trace.write(json.dumps({"step": step, "x": rnd.x, "y": rnd.y, "a": rnd.a, "b": rnd.b,
                                        "reward": rnd.reward, "advantage": adv, "baseline": baseline.b}) + "\n")
            if step % rcfg.eval_every == 0 or step == rcfg.steps:
                evaluate(step)
    finally:
        writer.close()
    if cfg.training.save_params:
        save_snapshot(out / f"params_seed_{seed}", {"type": "chsh_pair", "mode": mode,
                                                    "entanglement": cfg.entanglement.value}, pair.get_flat())
    return _chsh_seed_summary(evals)


def _chsh_seed_summary(evals):
    final = evals[-1][1]
    tail = evals[-max(1, int(round(CONVERGED_FRACTION * (len(evals) - 1)))) :]
    converged = {f"{x}{y}": float(np.mean([ev.per_pair[(x, y)] for _, ev in tail])) for x, y in INPUT_PAIRS}
    return {
        "final_win_rate": final.win_rate,
        "final_per_pair": {f"{x}{y}": v for (x, y), v in final.per_pair.items()},
        "converged_win_rate": float(np.mean([ev.win_rate for _, ev in tail])),
        "converged_per_pair": converged,
        "checkpoints": [s for s, _ in evals],
        "curve": [ev.win_rate for _, ev in evals],
    }


# -- grid tasks ---------------------------------------------------------------


def make_env(cfg):
    if cfg.env == "coingame":
        c = cfg.coingame
        return CoinGame(c.n_agents, c.resolved_size(), c.episode_len, c.collect_reward, c.steal_penalty)
    if cfg.env == "coopnav":
        c = cfg.coopnav
        return CoopNav(c.n_agents, c.size, c.max_steps, c.p_slip, c.step_penalty, c.collision_penalty,
                       c.goal_reward, c.encoding)
    raise ValueError(f"no grid environment for {cfg.env!r}")


def maa2c_config(cfg):
    if cfg.env == "coingame":
        c = cfg.coingame
        return Maa2cConfig(c.actor_lr, c.critic_lr, c.gamma, c.episode_len, c.resolved_episodes(),
                           cfg.training.entropy_coeff, cfg.training.grad_clip)
    c = cfg.coopnav
    return Maa2cConfig(c.actor_lr, c.critic_lr, c.gamma, c.max_steps, c.episodes,
                       cfg.training.entropy_coeff, cfg.training.grad_clip)


def make_bundle(cfg, env, rng):
    section = cfg.coingame if cfg.env == "coingame" else cfg.coopnav
    critic_hidden = section.resolved_critic_hidden() if cfg.env == "coingame" else section.critic_hidden
    return build_bundle(
        env.n_agents,
        env.obs_dim,
        env.n_actions,
        (cfg.hybridisation.actor, cfg.hybridisation.critic),
        cfg.entanglement,
        actor_hidden=section.actor_hidden,
        critic_hidden=critic_hidden,
        vqc=cfg.vqc.model_dump(),
        rng=rng,
    )


def _run_grid_seed(cfg, seed, out, trace):
    init_rng, rng, _ = seed_streams(seed)
    env = make_env(cfg)
    bundle = make_bundle(cfg, env, init_rng)
    mcfg = maa2c_config(cfg)
    optimiser = Maa2cOptimiser.for_bundle(bundle, mcfg)
    clock = _Clock(cfg.training.timing)
    writer = MetricWriter(out / f"seed_{seed}.csv")
    rewards, successes = [], []
    clipped = 0
    try:
        for ep in range(1, mcfg.episodes + 1):
            traj, stats = run_episode(env, bundle, rng, mcfg.episode_len)
            try:
                record = maa2c_episode_update(bundle, traj, mcfg, optimiser)
            except DivergenceError as exc:
                raise DivergenceError(f"episode {ep}: {exc}", step=exc.step) from exc
            clipped += bool(record.clipped)
            # CoinGame: team reward averaged over agents; CoopNav: the shared return
            reward = stats.reward / env.n_agents if cfg.env == "coingame" else stats.reward
            rewards.append(reward)
            successes.append(float(stats.success))
            writer.write({
                "step_or_episode": ep,
                "success_rate": float(stats.success) if cfg.env == "coopnav" else None,
                "collisions": stats.collisions if cfg.env == "coopnav" else None,
                "episode_length": stats.length,
                "reward": reward,
                "wall_ms": clock.lap_ms(),
            })
            if trace is not None:
                for t, (tr, a) in enumerate(zip(traj, record.advantages)):
                    trace.write(json.dumps({
                        "episode": ep, "t": t, "actions": [int(x) for x in tr.actions],
                        "reward": tr.reward, "done": tr.done, "value": float(record.values[t]),
                        "next_value": float(record.next_values[t]), "advantage": float(a),
                    }) + "\n")
    finally:
        writer.close()
    if cfg.training.save_params:
        save_bundle(out / f"params_seed_{seed}", bundle)
    return _grid_seed_summary(cfg, rewards, successes, clipped)


def _grid_seed_summary(cfg, rewards, successes, clipped):
    roll = rolling_mean(rewards)
    summary = {
        "episodes": len(rewards),
        "mean_reward": float(np.mean(rewards)),
        "final_rolling_reward": float(roll[-1]),
        "clipped_updates": clipped,
        "checkpoints": _checkpoints(len(rewards)),
        "curve": [float(roll[i - 1]) for i in _checkpoints(len(rewards))],
    }
    if cfg.env == "coopnav":
        sroll = rolling_mean(successes)
        summary["mean_success_rate"] = float(np.mean(successes))
        summary["final_rolling_success_rate"] = float(sroll[-1])
        summary["success_curve"] = [float(sroll[i - 1]) for i in _checkpoints(len(successes))]
    return summary


def _checkpoints(n):
    return sorted({max(1, int(round(n * k / N_CHECKPOINTS))) for k in range(1, N_CHECKPOINTS + 1)})


# -- orchestration -------------------------------------------------------------


def run_seed(cfg, seed, out):
    """Train one seed; returns its summary entry (status ``ok`` or ``diverged``)."""
    out = Path(out)
    trace = (out / f"seed_{seed}.trace.jsonl").open("w") if cfg.training.trace else None
    try:
        runner = _run_chsh_seed if cfg.env == "chsh" else _run_grid_seed
        result = runner(cfg, seed, out, trace)
        return dict(result, status="ok")
    except DivergenceError as exc:
        log.error("seed %s diverged: %s", seed, exc)
        return {"status": "diverged", "error": str(exc), "step": exc.step}
    finally:
        if trace is not None:
            trace.close()


def _run_seed_job(args):
    data, seed, out = args
    return run_seed(qconfig.validate(data), seed, out)


@dataclass
class ExperimentResult:
    out_dir: Path
    summary: dict
    seeds: dict = field(default_factory=dict)

    @property
    def diverged(self):
        return [s for s, r in self.seeds.items() if r["status"] != "ok"]


def experiment_dir(cfg, root=None):
    root = Path(root if root is not None else cfg.out_dir)
    return root / f"{cfg.label}-{qconfig.config_hash(cfg)}"


def run_experiment(cfg, out_dir=None, jobs=1):
    """Run every seed of ``cfg``; writes into ``out_dir`` (default: a hashed
    subdirectory of ``cfg.out_dir``)."""
    out = Path(out_dir) if out_dir is not None else experiment_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(qconfig.dump_config(cfg))
    data = qconfig.to_dict(cfg)
    jobs_list = [(data, seed, str(out)) for seed in cfg.seeds]
    if jobs > 1 and len(jobs_list) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_seed_job, jobs_list))
    else:
        results = [run_seed(cfg, seed, out) for seed in cfg.seeds]
    per_seed = {int(s): r for s, r in zip(cfg.seeds, results)}
    summary = summarise(cfg, per_seed)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return ExperimentResult(out, summary, per_seed)


def _stats(values):
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return {"mean": None, "std": None, "n": 0}
    return {"mean": float(values.mean()), "std": float(values.std()), "n": int(values.size)}


def summarise(cfg, per_seed):
    ok = {s: r for s, r in per_seed.items() if r["status"] == "ok"}
    summary = {
        "label": cfg.label,
        "config_hash": qconfig.config_hash(cfg),
        "env": cfg.env,
        "seeds": {str(s): r for s, r in sorted(per_seed.items())},
        "diverged_seeds": sorted(s for s, r in per_seed.items() if r["status"] != "ok"),
    }
    if not ok:
        return summary
    first = next(iter(ok.values()))
    curves = np.array([r["curve"] for r in ok.values()])
    summary["checkpoints"] = first["checkpoints"]
    summary["curve_mean"] = curves.mean(axis=0).tolist()
    summary["curve_std"] = curves.std(axis=0).tolist()
    if cfg.env == "chsh":
        summary["final_win_rate"] = _stats([r["final_win_rate"] for r in ok.values()])
        summary["converged_per_pair"] = {
            k: _stats([r["converged_per_pair"][k] for r in ok.values()]) for k in first["converged_per_pair"]
        }
    else:
        summary["mean_reward"] = _stats([r["mean_reward"] for r in ok.values()])
        summary["final_rolling_reward"] = _stats([r["final_rolling_reward"] for r in ok.values()])
        if cfg.env == "coopnav":
            summary["mean_success_rate"] = _stats([r["mean_success_rate"] for r in ok.values()])
            summary["final_rolling_success_rate"] = _stats([r["final_rolling_success_rate"] for r in ok.values()])
    return summary
