import copy
from pathlib import Path

import pytest

from debias_lab.config import SWEEPABLE, ConfigError, load_config, parse_config
from debias_lab.engine import ActiveDebiasing, PureExploration, UpdateStrategy
from debias_lab.policy import Adaptive, EqualOpportunity, FixedDecay

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

BASE = {
    "group": {
        "a": {
            "alpha1": 0.5,
            "label0": {"family": "gaussian", "true_psi": 7.0, "init_psi": 8.0},
            "label1": {"family": "gaussian", "true_psi": 10.0, "init_psi": 11.0},
        }
    }
}


def with_(path, value, base=BASE):
    raw = copy.deepcopy(base)
    node = raw
    for key in path[:-1]:
        node = node.setdefault(key, {})
    node[path[-1]] = value
    return raw


def key_of(raw):
    with pytest.raises(ConfigError) as exc:
        parse_config(raw)
    return exc.value.key


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.toml")), ids=lambda p: p.name)
def test_bundled_configs_parse(path):
    load_config(path)


def test_defaults():
    cfg = parse_config(BASE)
    assert cfg.batch_min == 50 and cfg.horizon == 10_000 and cfg.seeds == [0]
    assert cfg.tau0 == cfg.tau1 == 50.0
    assert isinstance(cfg.engine_config().variant, ActiveDebiasing)
    assert cfg.engine_config().variant.strategy == UpdateStrategy.MIRRORED_WINDOW
    assert isinstance(cfg.schedule, Adaptive)


def test_paper_config_values():
    cfg = load_config(CONFIGS / "paper_synthetic.toml")
    assert cfg.tau0 == 60 and cfg.tau1 == 50 and len(cfg.seeds) == 10
    assert cfg.initial.omega("a", 1) == pytest.approx(11.0)
    assert cfg.truth.omega("a", 1) == pytest.approx(10.0)


def test_omega_form_equivalent_to_psi():
    raw = with_(("group", "a", "label0"), {"family": "gaussian", "true_omega": 7.2533471031357997,
                                          "init_psi": 8.0})
    raw = with_(("tau",), {"label0": 60}, raw)
    cfg = parse_config(raw)
    assert cfg.truth["a"].dists[0].psi == pytest.approx(7.0, abs=1e-12)


@pytest.mark.parametrize(
    "path,value,key",
    [
        (("run", "bogus"), 1, "run.bogus"),
        (("extra",), {}, "extra"),
        (("run", "batch_min"), -1, "run.batch_min"),
        (("run", "horizon"), -5, "run.horizon"),
        (("run", "seeds"), [], "run.seeds"),
        (("run", "variant"), "greedy", "run.variant"),
        (("run", "eta"), 0.0, "run.eta"),
        (("tau", "label0"), 100, "tau.label0"),
        (("epsilon", "step"), 0.1, "epsilon.step"),
        (("fairness", "rule"), "equal_opportunity", "fairness.rule"),
        (("fairness", "slack"), 0.1, "fairness.slack"),
        (("group", "a", "alpha1"), 1.5, "group.a.alpha1"),
        (("group", "a", "alpha1"), 1.0, "group.a.alpha1"),
        (("group", "a", "weight"), -1.0, "group.a"),
        (("group", "a", "label0", "beta"), 2.0, "group.a.label0.beta"),
        (("group", "a", "label1", "true_omega"), 10.0, "group.a.label1.true_psi"),
        (("mdp", "L1l"), 5.0, "mdp.L1h"),
    ],
)
def test_errors_name_the_key(path, value, key):
    assert key_of(with_(path, value)) == key


def test_missing_group_table():
    assert key_of({}) == "group"
    raw = copy.deepcopy(BASE)
    del raw["group"]["a"]["label1"]
    assert key_of(raw) == "group.a.label1"


def test_mdp_cost_ordering_rejected():
    mdp = {"L1h": 1.0, "L1l": 2.0, "L2h": 10.0, "L2l": 1.0}
    assert key_of(with_(("mdp",), mdp)) == "mdp"
    mdp["L1l"] = 0.5
    assert parse_config(with_(("mdp",), mdp)).mdp.costs.N1 == 1000


def test_schedule_and_variant_parse():
    raw = with_(("epsilon",), {"schedule": "fixed_decay", "eps0": 0.5, "step": 0.1, "every": 100})
    raw = with_(("run", "variant"), "pure_exploration", raw)
    cfg = parse_config(raw)
    assert isinstance(cfg.schedule, FixedDecay) and cfg.schedule.every == 100
    assert isinstance(cfg.engine_config().variant, PureExploration)


def test_two_group_equal_opportunity():
    cfg = load_config(CONFIGS / "two_group_eo.toml")
    assert isinstance(cfg.rule, EqualOpportunity) and cfg.truth.names == ("a", "b")


def test_with_param_revalidates():
    cfg = parse_config(BASE)
    assert cfg.with_param("tau0", 55).tau0 == 55
    assert cfg.with_param("batch_min", 20.0).batch_min == 20
    with pytest.raises(ConfigError):
        cfg.with_param("batch_min", 2.5)
    with pytest.raises(ConfigError):
        cfg.with_param("colour", 1)
    with pytest.raises(ConfigError):
        cfg.with_param("tau0", 120)
    assert "tau0" in SWEEPABLE


def test_invalid_toml(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("[run\n")
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(OSError):
        load_config(tmp_path / "missing.toml")
