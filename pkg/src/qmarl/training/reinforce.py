"""REINFORCE with a moving-average baseline for the CHSH game."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..envs.chsh import INPUT_PAIRS, ChshRound, chsh_step, sample_inputs
from ..errors import DegenerateOutcomeError
from ..policies.chsh import chsh_joint_action_distribution, entropy_grad, log_joint_grad

log = logging.getLogger(__name__)


@dataclass
class ReinforceConfig:
    lr: float = 0.02
    baseline_momentum: float = 0.95
    steps: int = 20000
    entropy_coeff: float = 0.0
    eval_episodes: int = 1000
    eval_every: int = 500
    sampled_eval: bool = False

    def __post_init__(self):
        if not 0.0 <= self.baseline_momentum < 1.0:
            raise ValueError("baseline momentum must lie in [0, 1)")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")


@dataclass
class BaselineState:
    b: float = 0.0

    def update(self, reward, momentum):
        self.b = momentum * self.b + (1.0 - momentum) * reward
        return self.b


def play_round(pair, rng):
    """Sample inputs, then a joint outcome from the exact action table."""
    x, y = sample_inputs(rng)
    table = chsh_joint_action_distribution(pair, (x, y)).ravel()
    cdf = np.cumsum(table)
    k = min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), 3)
    a, b = divmod(k, 2)
    return ChshRound(x, y, a, b)


def reinforce_update(pair, rnd, baseline, cfg):
    """One policy-gradient step on ``pair`` (in place); returns the advantage.

    The advantage uses the baseline from *before* this round; the baseline
    then absorbs the reward.
    """
    reward = rnd.reward
    advantage = reward - baseline.b
    inputs, actions = (rnd.x, rnd.y), (rnd.a, rnd.b)
    step = np.zeros(pair.n_params)
    try:
        if advantage != 0.0:
            step += advantage * log_joint_grad(pair, inputs, actions)
        if cfg.entropy_coeff:
            step += cfg.entropy_coeff * entropy_grad(pair, inputs)
    except DegenerateOutcomeError:
        log.warning("skipping update on a zero-probability outcome %s", rnd)
        step[:] = 0.0
    if np.any(step):
        pair.set_flat(pair.get_flat() + cfg.lr * step)
    baseline.update(reward, cfg.baseline_momentum)
    return advantage


@dataclass
class ChshEvaluation:
    win_rate: float
    per_pair: dict

    def as_row(self):
        row = {"win_rate": self.win_rate}
        for (x, y), v in self.per_pair.items():
            row[f"per_pair_{x}{y}"] = v
        return row


def evaluate_chsh(pair, episodes=None, rng=None):
    """Win rate and per-input-pair win rates.

    Without ``rng`` the evaluation is exact (uses the joint action table).
    With ``rng`` it plays ``episodes`` sampled rounds instead.
    """
    if rng is None:
        per_pair = {}
        for x, y in INPUT_PAIRS:
            table = chsh_joint_action_distribution(pair, (x, y))
            per_pair[(x, y)] = float(
                sum(table[a, b] for a in (0, 1) for b in (0, 1) if chsh_step((x, y), (a, b)))
            )
        return ChshEvaluation(float(np.mean(list(per_pair.values()))), per_pair)
    wins = {p: [] for p in INPUT_PAIRS}
    for _ in range(episodes):
        rnd = play_round(pair, rng)
        wins[(rnd.x, rnd.y)].append(rnd.reward)
    per_pair = {p: float(np.mean(w)) if w else float("nan") for p, w in wins.items()}
    total = sum(len(w) for w in wins.values())
    return ChshEvaluation(sum(sum(w) for w in wins.values()) / total, per_pair)


def train_chsh(pair, cfg, rng, on_eval=None, eval_rng=None):
    """Run ``cfg.steps`` REINFORCE rounds; ``on_eval(step, evaluation)`` is
    called at step 0, every ``cfg.eval_every`` steps and at the end."""
    baseline = BaselineState()

    def _eval(step):
        if on_eval is None:
            return
        if cfg.sampled_eval:
            ev = evaluate_chsh(pair, cfg.eval_episodes, eval_rng)
        else:
            ev = evaluate_chsh(pair)
        on_eval(step, ev)

    _eval(0)
    for step in range(1, cfg.steps + 1):
        reinforce_update(pair, play_round(pair, rng), baseline, cfg)
        if step % cfg.eval_every == 0 or step == cfg.steps:
            _eval(step)
    return baseline
