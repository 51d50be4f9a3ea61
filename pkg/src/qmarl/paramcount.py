"""Trainable-parameter reports and comparison against golden counts."""

from __future__ import annotations

from importlib import resources

import numpy as np
import yaml

from .policies.actors import count_bundle_params
from .policies.chsh import ChshPair

FIELDS = ("preprocessing", "vqc", "readout", "actor", "critic", "total")


def count_for_config(cfg):
    """Counts for the bundle that ``cfg`` would train (built with a fixed seed)."""
    rng = np.random.default_rng(0)
    if cfg.env == "chsh":
        quantum = cfg.hybridisation.actor == "quantum"
        pair = ChshPair.init("quantum" if quantum else "classical", cfg.entanglement, rng)
        n = pair.n_params
        # the pair is tabulated as one policy; its angles are the whole circuit
        return {"preprocessing": 0, "vqc": n if quantum else 0, "readout": 0, "actor": n, "critic": 0, "total": n}
    from .training.experiment import make_bundle, make_env

    env = make_env(cfg)
    counts = count_bundle_params(make_bundle(cfg, env, rng))
    return {k: counts[k] for k in FIELDS}


def load_golden_cases():
    text = resources.files("qmarl").joinpath("data/golden_counts.yaml").read_text()
    return yaml.safe_load(text)["cases"]


def compare(counts, expectation):
    """Returns ``(mismatches, flagged)`` as lists of human-readable lines."""
    mismatches, flagged = [], []
    for key, want in (expectation.get("expect") or {}).items():
        if counts.get(key) != want:
            mismatches.append(f"{key}: expected {want}, computed {counts.get(key)}")
    for key, (lo, hi) in (expectation.get("ranges") or {}).items():
        got = counts.get(key)
        if got is None or not lo <= got <= hi:
            mismatches.append(f"{key}: expected within [{lo}, {hi}], computed {got}")
    for key, note in (expectation.get("flagged") or {}).items():
        flagged.append(f"{key}: table {note['table']}, computed {counts.get(key)} (flagged: {note['reason']})")
    return mismatches, flagged


def format_counts(counts):
    return "\n".join(f"{k:<14}{counts[k]:>8}" for k in FIELDS)
