"""Aggregate finished experiment directories into summary rows and series.

Summary rows follow the layout Mean / Std / Best across seeds, where each
seed contributes one number:

* CHSH: final win rate.
* CoopNav: success rate averaged over all training episodes.
* CoinGame: episode reward averaged over all training episodes.

Series files hold, per step or episode, the cross-seed mean and std of the
per-seed rolling mean (window 100; CHSH checkpoints are used as-is).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .training.experiment import ROLLING_WINDOW, read_metrics, rolling_mean

SUMMARY_COLUMNS = ("label", "env", "metric", "seeds", "expected_seeds", "mean", "std", "best", "warning")
METRIC = {"chsh": "win_rate", "coopnav": "success_rate", "coingame": "reward"}


@dataclass
class VariantReport:
    label: str
    env: str
    metric: str
    per_seed: dict
    expected: list
    series_x: np.ndarray
    series_mean: np.ndarray
    series_std: np.ndarray

    @property
    def missing(self):
        return [s for s in self.expected if s not in self.per_seed]

    def row(self):
        values = np.array([self.per_seed[s] for s in sorted(self.per_seed)])
        warning = f"missing seeds {self.missing}" if self.missing else ""
        return {
            "label": self.label,
            "env": self.env,
            "metric": self.metric,
            "seeds": len(values),
            "expected_seeds": len(self.expected),
            "mean": float(values.mean()) if values.size else None,
            "std": float(values.std()) if values.size else None,
            "best": float(values.max()) if values.size else None,
            "warning": warning,
        }


def _load_config(result_dir):
    path = Path(result_dir) / "config.yaml"
    if not path.exists():
        raise FileNotFoundError(f"{result_dir}: no config.yaml, not an experiment directory")
    return yaml.safe_load(path.read_text())


def load_variant(result_dir, window=ROLLING_WINDOW):
    """Read one experiment directory; seeds with absent or empty CSVs count as missing."""
    result_dir = Path(result_dir)
    cfg = _load_config(result_dir)
    env = cfg.get("env", "chsh")
    metric = METRIC[env]
    expected = [int(s) for s in cfg.get("seeds", [])]
    per_seed, curves = {}, {}
    for seed in expected:
        path = result_dir / f"seed_{seed}.csv"
        if not path.exists():
            continue
        rows = read_metrics(path)
        values = [r[metric] for r in rows if r[metric] is not None]
        if not values:
            continue
        xs = [r["step_or_episode"] for r in rows if r[metric] is not None]
        if env == "chsh":
            per_seed[seed] = values[-1]
            curves[seed] = (np.array(xs), np.array(values))
        else:
            per_seed[seed] = float(np.mean(values))
            curves[seed] = (np.array(xs), rolling_mean(values, window))
    if curves:
        n = min(len(c[1]) for c in curves.values())
        stack = np.stack([c[1][:n] for c in curves.values()])
        x = next(iter(curves.values()))[0][:n]
        mean, std = stack.mean(axis=0), stack.std(axis=0)
    else:
        x = mean = std = np.zeros(0)
    return VariantReport(result_dir.name, env, metric, per_seed, expected, x, mean, std)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def summary_csv(reports):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for rep in reports:
        row = rep.row()
        w.writerow([_fmt(row[c]) for c in SUMMARY_COLUMNS])
    return buf.getvalue()


def series_csv(rep):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("step_or_episode", f"{rep.metric}_mean", f"{rep.metric}_std"))
    for x, m, s in zip(rep.series_x, rep.series_mean, rep.series_std):
        w.writerow((_fmt(int(x)), _fmt(float(m)), _fmt(float(s))))
    return buf.getvalue()


def build_report(result_dirs, out_dir, window=ROLLING_WINDOW):
    """Write ``summary.csv`` and ``series_<label>.csv`` into ``out_dir``."""
    reports = [load_variant(d, window) for d in result_dirs]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.csv").write_text(summary_csv(reports))
    for rep in reports:
        (out / f"series_{rep.label}.csv").write_text(series_csv(rep))
    return reports


def format_table(reports):
    lines = [f"{'variant':<52} {'metric':<13} {'seeds':>5} {'mean':>8} {'std':>8} {'best':>8}"]
    for rep in reports:
        r = rep.row()
        nums = " ".join(f"{r[k]:8.3f}" if r[k] is not None else f"{'-':>8}" for k in ("mean", "std", "best"))
        line = f"{r['label']:<52} {r['metric']:<13} {r['seeds']:>5} {nums}"
        if r["warning"]:
            line += f"  WARNING: {r['warning']}"
        lines.append(line)
    return "\n".join(lines)
