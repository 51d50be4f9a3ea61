import pytest
import yaml

from qmarl import config as qconfig
from qmarl.errors import ConfigError


def write(tmp_path, name, data):
    path = tmp_path / name
    path.write_text(data if isinstance(data, str) else yaml.safe_dump(data))
    return path


def test_minimal_chsh_config(tmp_path):
    cfg = qconfig.load_config(write(tmp_path, "c.yaml", "env: chsh\nentanglement: phi_plus\nout_dir: runs/chsh\n"), {})
    assert cfg.chsh.lr == 0.02 and cfg.chsh.baseline_momentum == 0.95 and cfg.chsh.steps == 20000
    assert cfg.seeds == list(range(10))
    assert cfg.label == "chsh-quantum-phi_plus"


def test_published_defaults():
    cfg = qconfig.validate({"env": "coingame"})
    assert (cfg.coingame.actor_lr, cfg.coingame.critic_lr, cfg.coingame.gamma) == (3e-4, 1e-3, 0.95)
    assert cfg.coingame.resolved_size() == 3 and cfg.coingame.resolved_episodes() == 3000
    four = qconfig.validate({"env": "coingame", "coingame": {"n_agents": 4}})
    assert four.coingame.resolved_size() == 5 and four.coingame.resolved_critic_hidden() == [6]
    nav = qconfig.validate({"env": "coopnav"})
    assert (nav.coopnav.actor_lr, nav.coopnav.critic_lr, nav.coopnav.gamma) == (2e-4, 3e-4, 0.99)
    assert (nav.coopnav.p_slip, nav.coopnav.max_steps, nav.coopnav.episodes) == (0.10, 40, 10000)


def test_round_trip(tmp_path):
    cfg = qconfig.validate({"env": "coopnav", "coopnav": {"encoding": "continuous"}, "seeds": [3, 4]})
    text = qconfig.dump_config(cfg)
    again = qconfig.load_config(write(tmp_path, "c.yaml", text), {})
    assert qconfig.dump_config(again) == text
    assert qconfig.to_dict(again) == qconfig.to_dict(cfg)


@pytest.mark.parametrize(
    "data, field",
    [
        ({"entanglement": "bell"}, "entanglement"),
        ({"chsh": {"lr": -1}}, "chsh.lr"),
        ({"coopnav": {"bogus": 1}}, "coopnav.bogus"),
        ({"env": "coingame", "hybridisation": {"actor": "classical"}, "entanglement": "phi_plus"}, "entanglement"),
        ({"env": "coingame", "coingame": {"n_agents": 4}, "entanglement": "phi_plus"}, "entanglement"),
        ({"env": "chsh", "entanglement": "ghz"}, "entanglement"),
        ({"vqc": {"rotations_per_qubit_per_layer": 5}}, "vqc.rotations_per_qubit_per_layer"),
    ],
)
def test_errors_name_the_field(data, field):
    with pytest.raises(ConfigError) as info:
        qconfig.validate(data)
    assert info.value.path == field
    assert field in str(info.value)


def test_non_mapping_rejected(tmp_path):
    with pytest.raises(ConfigError):
        qconfig.load_config(write(tmp_path, "c.yaml", "- a\n- b\n"), {})
    with pytest.raises(ConfigError):
        qconfig.load_config(tmp_path / "missing.yaml", {})


def test_env_overrides(tmp_path):
    path = write(tmp_path, "c.yaml", {"env": "chsh"})
    env = {"QMARL__CHSH__STEPS": "2000", "QMARL__ENTANGLEMENT": "psi_minus", "HOME": "/root"}
    cfg = qconfig.load_config(path, env)
    assert cfg.chsh.steps == 2000 and cfg.entanglement.value == "psi_minus"
    with pytest.raises(ConfigError) as info:
        qconfig.load_config(path, {"QMARL__CHSH__STEPS": "lots"})
    assert info.value.path == "chsh.steps"


def test_hash_ignores_seeds_and_out_dir():
    a = qconfig.validate({"seeds": [0], "out_dir": "x"})
    b = qconfig.validate({"seeds": [1, 2], "out_dir": "y"})
    c = qconfig.validate({"chsh": {"lr": 0.01}})
    assert qconfig.config_hash(a) == qconfig.config_hash(b) != qconfig.config_hash(c)


def test_sweep_expansion_and_isolation(tmp_path):
    from qmarl.training.experiment import experiment_dir

    path = write(
        tmp_path,
        "s.yaml",
        {
            "base": {"env": "chsh"},
            "axes": {
                "entanglement": ["phi_plus", "phi_minus", "psi_plus", "psi_minus", "product"],
                "chsh.entropy_coeff": [0.0, 0.2],
            },
        },
    )
    spec = qconfig.SweepSpec.load(path, {})
    configs = spec.expand()
    assert len(spec) == len(configs) == 10
    assert len({experiment_dir(c, tmp_path) for c in configs}) == 10


def test_sweep_rejects_bad_axes(tmp_path):
    with pytest.raises(ConfigError):
        qconfig.SweepSpec({}, {"entanglement": []})
    with pytest.raises(ConfigError):
        qconfig.SweepSpec.load(write(tmp_path, "s.yaml", {"base": {}, "extra": 1}), {})
    spec = qconfig.SweepSpec({}, {"chsh.lr": [0.1, -0.1]})
    with pytest.raises(ConfigError):
        spec.expand()
