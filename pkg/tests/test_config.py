import pytest
from hypothesis import given, strategies as st

from fedda.config import (ConfigError, ExperimentConfig, apply_overrides, load_config, parse_config,
                          serialize_config)


def test_minimal_config_gets_defaults():
    cfg = parse_config('[run]\nalgorithm = "fedda"\n')
    assert cfg == ExperimentConfig()
    assert cfg.run.density_threshold == 0.01
    assert cfg.participants == cfg.run.K
    assert cfg.variant_name() == "FedDA-1-1"


def test_unknown_key_is_named():
    with pytest.raises(ConfigError, match="leraning_rate"):
        parse_config("[baseline]\nleraning_rate = 0.1\n")
    with pytest.raises(ConfigError, match="optimiser"):
        parse_config("[optimiser]\nlr = 0.1\n")


@pytest.mark.parametrize("text, key", [
    ('[run]\nK = "eight"\n', "run.K"),
    ("[run]\nK = 1.5\n", "run.K"),
    ('[constraint]\nkind = "simplex"\n', "constraint.kind"),
    ("[run]\nK = 4\nr = 5\n", "run.r"),
    ('[run]\nalgorithm = "fedda-i1"\nI = 3\n', "run.I"),
    ("[adaptive]\nepsilon = 0\n", "adaptive.epsilon"),
])
def test_schema_violations_name_the_key(text, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        parse_config(text)


def test_invalid_toml_and_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="invalid TOML"):
        parse_config("[run\n")
    with pytest.raises(ConfigError, match="nothing.toml"):
        load_config(tmp_path / "nothing.toml")


def test_overrides():
    cfg = apply_overrides(ExperimentConfig(), ["run.E=3", "constraint.kind=l1", "schedule.eta=1e-2",
                                               "run.trace_clients=false"])
    assert (cfg.run.E, cfg.constraint.kind, cfg.schedule.eta, cfg.run.trace_clients) == (3, "l1", 0.01, False)
    with pytest.raises(ConfigError, match="section.key"):
        apply_overrides(cfg, ["E=3"])
    with pytest.raises(ConfigError):
        apply_overrides(cfg, ["run.E"])


def test_variant_names():
    base = ExperimentConfig()
    assert base.with_overrides(estimator={"variant": "momentum"}, adaptive={"variant": "norm"}).variant_name() == "FedDA-2-2"
    assert base.with_overrides(run={"algorithm": "fedda-i1", "I": 1}).variant_name() == "FedDA-1-1-i1"
    assert base.with_overrides(run={"algorithm": "fedadam"}).variant_name() == "FedAdam"


configs = st.builds(
    lambda K, r, I, E, eta, beta, kind, algo, alg_est, fields: ExperimentConfig().with_overrides(
        run={"K": K, "r": min(r, K), "I": I, "E": E, "algorithm": algo, "seed": E * 7},
        schedule={"eta": eta}, adaptive={"beta": beta}, constraint={"kind": kind},
        estimator={"variant": alg_est}, output={"svg_fields": fields}),
    st.integers(1, 64), st.integers(0, 64), st.integers(1, 10), st.integers(0, 10_000),
    st.floats(1e-8, 10.0), st.floats(0.0, 1.0), st.sampled_from(["none", "box", "l2", "l1"]),
    st.sampled_from(["fedda", "fedavg", "fedadam", "fedcm"]), st.sampled_from(["mvr", "momentum"]),
    st.lists(st.sampled_from(["loss", "measure_g", "grad_map", "density"]), max_size=3).map(tuple),
)


@given(configs)
def test_serialize_round_trip(cfg):
    assert parse_config(serialize_config(cfg)) == cfg
