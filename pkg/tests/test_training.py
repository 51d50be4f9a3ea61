import numpy as np
import pytest

from qmarl.envs.chsh import ChshRound
from qmarl.envs.coingame import CoinGame
from qmarl.envs.coopnav import CoopNav
from qmarl.errors import DivergenceError
from qmarl.policies.actors import build_bundle, count_bundle_params
from qmarl.policies.chsh import (
    ChshPair,
    deterministic_classical_pair,
    entropy_grad,
    log_joint_grad,
    optimal_quantum_pair,
)
from qmarl.training.maa2c import (
    Maa2cConfig,
    Maa2cOptimiser,
    Transition,
    clip_by_global_norm,
    compute_advantages,
    global_state,
    maa2c_episode_update,
    run_episode,
    train_maa2c,
)
from qmarl.training.reinforce import (
    BaselineState,
    ReinforceConfig,
    evaluate_chsh,
    play_round,
    reinforce_update,
    train_chsh,
)

# -- REINFORCE -----------------------------------------------------------------


def test_baseline_arithmetic():
    b = BaselineState()
    assert b.update(1.0, 0.95) == pytest.approx(0.05)


def test_config_validation():
    with pytest.raises(ValueError):
        ReinforceConfig(baseline_momentum=1.0)
    with pytest.raises(ValueError):
        ReinforceConfig(lr=0.0)


def test_advantage_uses_previous_baseline():
    pair = optimal_quantum_pair()
    baseline = BaselineState(0.4)
    adv = reinforce_update(pair, ChshRound(0, 0, 1, 1), baseline, ReinforceConfig())
    assert adv == pytest.approx(0.6)
    assert baseline.b == pytest.approx(0.95 * 0.4 + 0.05)


@pytest.mark.parametrize("mode, variant", [("quantum", "phi_plus"), ("classical", "product")])
def test_zero_advantage_leaves_parameters(mode, variant):
    pair = ChshPair.init(mode, variant, np.random.default_rng(0))
    before = pair.get_flat()
    reinforce_update(pair, ChshRound(1, 1, 0, 0), BaselineState(0.0), ReinforceConfig())
    np.testing.assert_array_equal(pair.get_flat(), before)


@pytest.mark.parametrize("mode", ["quantum", "classical"])
def test_entropy_gradient_vanishes_at_uniform_policy(mode):
    # theta = pi/4 gives P(1) = 1/2 for a quantum agent; logit 0 for a classical one
    value = np.pi / 4 if mode == "quantum" else 0.0
    pair = ChshPair.init(mode, "product", np.random.default_rng(1))
    pair.set_flat(np.full(4, value))
    for inputs in [(0, 0), (1, 1)]:
        np.testing.assert_allclose(entropy_grad(pair, inputs), 0.0, atol=1e-12)


def test_entropy_term_adds_linearly():
    rnd = ChshRound(1, 0, 1, 0)
    start = ChshPair.init("quantum", "phi_plus", np.random.default_rng(2)).get_flat()

    def step(beta):
        pair = ChshPair.init("quantum", "phi_plus", np.random.default_rng(2))
        reinforce_update(pair, rnd, BaselineState(0.3), ReinforceConfig(entropy_coeff=beta))
        return pair.get_flat() - start

    pair = ChshPair.init("quantum", "phi_plus", np.random.default_rng(2))
    expected = step(0.0) + 0.02 * 0.2 * entropy_grad(pair, (1, 0))
    np.testing.assert_allclose(step(0.2), expected, atol=1e-12)


def test_update_follows_log_gradient():
    pair = ChshPair.init("quantum", "phi_plus", np.random.default_rng(3))
    start = pair.get_flat()
    rnd = ChshRound(0, 1, 1, 1)
    grad = log_joint_grad(pair, (0, 1), (1, 1))
    adv = reinforce_update(pair, rnd, BaselineState(0.2), ReinforceConfig())
    np.testing.assert_allclose(pair.get_flat(), start + 0.02 * adv * grad, atol=1e-14)


def test_evaluation_examples():
    assert evaluate_chsh(optimal_quantum_pair()).win_rate == pytest.approx(0.8536, abs=1e-3)
    assert min(evaluate_chsh(optimal_quantum_pair()).per_pair.values()) >= 0.85
    best = evaluate_chsh(deterministic_classical_pair((0, 0), (0, 0)))
    assert best.win_rate == pytest.approx(0.75, abs=1e-12)
    np.testing.assert_allclose(list(best.per_pair.values()), [1, 1, 1, 0], atol=1e-12)
    uniform = ChshPair.init("classical", "product", np.random.default_rng(0))
    uniform.set_flat(np.zeros(4))
    ev = evaluate_chsh(uniform)
    assert ev.win_rate == pytest.approx(0.5) and all(v == pytest.approx(0.5) for v in ev.per_pair.values())


def test_sampled_evaluation_within_three_sigma():
    pair = ChshPair.init("quantum", "phi_plus", np.random.default_rng(4))
    exact = evaluate_chsh(pair).win_rate
    n = 100_000
    sampled = evaluate_chsh(pair, n, np.random.default_rng(5)).win_rate
    assert abs(sampled - exact) <= 3 * np.sqrt(exact * (1 - exact) / n)


def test_play_round_frequencies():
    pair = ChshPair.init("quantum", "psi_plus", np.random.default_rng(6))
    rng = np.random.default_rng(7)
    rounds = [play_round(pair, rng) for _ in range(20000)]
    wins = np.mean([r.reward for r in rounds])
    exact = evaluate_chsh(pair).win_rate
    assert abs(wins - exact) <= 3 * np.sqrt(exact * (1 - exact) / len(rounds))


def test_train_chsh_reports_checkpoints():
    pair = ChshPair.init("quantum", "phi_plus", np.random.default_rng(8))
    seen = []
    train_chsh(pair, ReinforceConfig(steps=250, eval_every=100), np.random.default_rng(9), lambda s, ev: seen.append(s))
    assert seen == [0, 100, 200, 250]


def test_short_training_improves_entangled_pair():
    rng = np.random.default_rng(10)
    pair = ChshPair.init("quantum", "phi_plus", rng)
    start = evaluate_chsh(pair).win_rate
    train_chsh(pair, ReinforceConfig(steps=3000), rng)
    assert evaluate_chsh(pair).win_rate > max(start, 0.75)


# -- MAA2C ---------------------------------------------------------------------


def test_advantage_example():
    adv = compute_advantages([1.0], [0.3], [0.5], [False], 0.99)
    assert adv[0] == pytest.approx(1.195)


def test_terminal_advantage_has_no_bootstrap():
    adv = compute_advantages([1.0], [0.3], [123.0], [True], 0.99)
    assert adv[0] == pytest.approx(0.7)


def test_maa2c_config_validation():
    with pytest.raises(ValueError):
        Maa2cConfig(gamma=0.0)
    with pytest.raises(ValueError):
        Maa2cConfig(grad_clip=-1.0)


def test_clip_by_global_norm():
    g, hit = clip_by_global_norm(np.array([3.0, 4.0]), 1.0)
    np.testing.assert_allclose(g, [0.6, 0.8])
    assert hit
    g, hit = clip_by_global_norm(np.array([3.0, 4.0]), None)
    assert not hit and g[0] == 3.0


def test_global_state_is_concatenation():
    obs = [np.arange(3.0), np.arange(3.0, 5.0)]
    np.testing.assert_array_equal(global_state(obs), np.arange(5.0))


def small_coopnav_bundle(actor="classical", critic="classical", seed=0):
    env = CoopNav(encoding="continuous")
    bundle = build_bundle(
        2, env.obs_dim, env.n_actions, (actor, critic), actor_hidden=(8,), critic_hidden=(8,),
        vqc={"n_qubits": 2, "depth": 1}, rng=np.random.default_rng(seed),
    )
    return env, bundle


def test_perfect_critic_leaves_actors_unchanged():
    env, bundle = small_coopnav_bundle()
    traj, _ = run_episode(env, bundle, np.random.default_rng(1))
    # terminal transitions whose reward equals V(s) have zero advantage exactly
    values = bundle.critic.values(np.stack([t.state for t in traj]))
    traj = [Transition(t.observations, t.actions, float(v), t.next_observations, True) for t, v in zip(traj, values)]
    before = [a.get_flat() for a in bundle.actors]
    record = maa2c_episode_update(bundle, traj, Maa2cConfig(), Maa2cOptimiser.for_bundle(bundle, Maa2cConfig()))
    assert not record.advantages.any()
    for actor, flat in zip(bundle.actors, before):
        np.testing.assert_array_equal(actor.get_flat(), flat)


@pytest.mark.parametrize("actor, critic", [("classical", "classical"), ("quantum", "quantum")])
def test_logged_advantages_match_recomputation(actor, critic):
    env, bundle = small_coopnav_bundle(actor, critic)
    cfg = Maa2cConfig()
    rng = np.random.default_rng(2)
    traj, _ = run_episode(env, bundle, rng)
    critic_before = bundle.critic.get_flat()
    record = maa2c_episode_update(bundle, traj, cfg, Maa2cOptimiser.for_bundle(bundle, cfg))
    bundle.critic.set_flat(critic_before)
    for t, adv in zip(traj, record.advantages):
        v = bundle.critic.values(t.state)[0]
        v_next = bundle.critic.values(t.next_state)[0]
        assert adv == pytest.approx(t.reward + cfg.gamma * v_next * (1 - t.done) - v, abs=1e-9)


def test_update_vector_length_matches_parameter_count():
    env, bundle = small_coopnav_bundle("quantum", "classical")
    cfg = Maa2cConfig()
    before = bundle.get_flat()
    traj, _ = run_episode(env, bundle, np.random.default_rng(3))
    maa2c_episode_update(bundle, traj, cfg, Maa2cOptimiser.for_bundle(bundle, cfg))
    delta = bundle.get_flat() - before
    assert delta.size == count_bundle_params(bundle)["total_all_agents"]
    assert np.count_nonzero(delta) > 0


def test_critic_step_is_semi_gradient_descent():
    env, bundle = small_coopnav_bundle()
    cfg = Maa2cConfig(critic_lr=1e-3)
    traj, _ = run_episode(env, bundle, np.random.default_rng(4))
    opt = Maa2cOptimiser.for_bundle(bundle, cfg)
    record = maa2c_episode_update(bundle, traj, cfg, opt)
    # re-evaluate the loss with the bootstrap targets frozen at their old values
    states = np.stack([t.state for t in traj])
    targets = record.advantages + record.values
    assert np.mean((targets - bundle.critic.values(states)) ** 2) < record.critic_loss


def test_non_finite_advantage_raises_with_step():
    env, bundle = small_coopnav_bundle()
    traj, _ = run_episode(env, bundle, np.random.default_rng(5))
    bad = traj[1]
    traj[1] = Transition(bad.observations, bad.actions, float("nan"), bad.next_observations, bad.done)
    with pytest.raises(DivergenceError) as info:
        maa2c_episode_update(bundle, traj, Maa2cConfig(), Maa2cOptimiser.for_bundle(bundle, Maa2cConfig()))
    assert info.value.step == 1


def test_team_reward_is_sum_of_agent_rewards():
    env = CoinGame()
    bundle = build_bundle(2, env.obs_dim, 4, ("classical", "classical"), actor_hidden=(4,), critic_hidden=(4,))
    traj, stats = run_episode(env, bundle, np.random.default_rng(6))
    assert len(traj) == 150
    for t in traj:
        assert t.reward == pytest.approx(t.agent_rewards.sum())
    assert stats.reward == pytest.approx(stats.agent_rewards.sum())


def test_train_maa2c_is_deterministic():
    def run():
        env, bundle = small_coopnav_bundle("quantum", "classical", seed=7)
        train_maa2c(env, bundle, Maa2cConfig(episodes=5, actor_lr=1e-2), np.random.default_rng(8))
        return bundle.get_flat().tobytes()

    assert run() == run()


def test_clipping_is_reported():
    env, bundle = small_coopnav_bundle()
    cfg = Maa2cConfig(grad_clip=1e-6)
    traj, _ = run_episode(env, bundle, np.random.default_rng(9))
    record = maa2c_episode_update(bundle, traj, cfg, Maa2cOptimiser.for_bundle(bundle, cfg))
    assert "critic" in record.clipped
