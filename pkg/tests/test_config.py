import json

import pytest

from crossworld import (
    ConfigurationError,
    ExperimentConfig,
    MethodSpec,
    Rho,
    RhoRule,
    load_config,
)
from crossworld.config import METHODS, CmcSettings, OutputSettings


@pytest.mark.parametrize(
    ("raw", "rho_true", "expected"),
    [
        ("true", 0.5, 0.5),
        ("misspecified(0.25)", 0.5, 0.25),
        ("misspecified(0.5)", -0.75, -1.0),
        ("fixed(-1)", 0.5, -1.0),
        (" fixed( 0 ) ", 1.0, 0.0),
        (0.3, -1.0, 0.3),
    ],
)
def test_rho_rule_resolution(raw: str | float, rho_true: float, expected: float) -> None:
    assert RhoRule.parse(raw).resolve(rho_true) == Rho(expected)


@pytest.mark.parametrize(
    "raw", ["sometimes", "true(1)", "fixed", "fixed(abc)", "fixed(2)", True]
)
def test_rho_rule_rejects(raw: str | bool) -> None:
    with pytest.raises(ConfigurationError):
        RhoRule.parse(raw)


def test_rho_rule_text() -> None:
    assert str(RhoRule.parse("fixed(-1)")) == "fixed(-1)"
    assert str(RhoRule.parse("misspecified(0.25)")) == "misspecified(0.25)"
    assert str(RhoRule()) == "true"


def test_method_defaults() -> None:
    assert MethodSpec.default("naive").rho_used == RhoRule("fixed", -1.0)
    assert MethodSpec.default("cw+ci").rho_used == RhoRule("true")
    assert MethodSpec.default("cmc").rho_used.resolve(0.9) == Rho(0.0)
    with pytest.raises(ConfigurationError, match="unknown method"):
        MethodSpec("x", "magic")
    with pytest.raises(ConfigurationError):
        MethodSpec("cw", "cw", c=2.0)


def test_defaults() -> None:
    config = ExperimentConfig.from_dict({})
    assert config == ExperimentConfig()
    assert [m.name for m in config.methods] == list(METHODS)
    assert config.is_synthetic
    assert config.output.summary_path == "results.summary.csv"
    assert config.output.manifest_path == "results.manifest.json"
    assert OutputSettings(results="out/r.csv", summary="s.csv").summary_path == "s.csv"


def test_level_grid() -> None:
    grid = CmcSettings(levels=9).level_grid()
    assert len(grid) == 9
    assert grid[0] == pytest.approx(1 / 18)
    assert grid[4] == pytest.approx(0.5)
    with pytest.raises(ConfigurationError, match="levels"):
        CmcSettings(levels=3)


@pytest.mark.parametrize(
    ("raw", "key"),
    [
        ({"experiment": {"alpha": "x"}}, "experiment.alpha"),
        ({"experiment": {"alpha": 1.5}}, "experiment.alpha"),
        ({"grid": {"rho": [0.5, 2.0]}}, "grid.rho"),
        ({"grid": {"d": [1, 1.5]}}, "grid.d[1]"),
        ({"grid": {"noise": ["gaussian/clayton"]}}, "grid.noise"),
        ({"learner": {"trees": 0}}, "learner.trees"),
        ({"learner": {"tres": 5}}, "learner.tres"),
        ({"bootstrap": {"B": 10}}, "bootstrap.B"),
        ({"cmc": {"M": 5}}, "cmc.M"),
        ({"methods": ["cw", "magic"]}, "methods.magic"),
        (
            {"methods": {"cw_bad": {"method": "cw", "rho_used": "sometimes"}}},
            "methods.cw_bad.rho_used",
        ),
        ({"methods": {"cw": {"colour": "red"}}}, "methods.cw.colour"),
        ({"extra": 1}, "extra"),
    ],
)
def test_errors_name_the_key(raw: dict, key: str) -> None:
    with pytest.raises(ConfigurationError) as info:
        ExperimentConfig.from_dict(raw)
    assert info.value.key == key


def test_method_tables() -> None:
    config = ExperimentConfig.from_dict(
        {
            "methods": {
                "cw": {},
                "cw-mis": {"method": "cw", "rho_used": "misspecified(0.25)"},
                "cw+ci-lin": {"method": "cw+ci", "c_rule": "linear", "c": 0.5},
                "naive": {},
            }
        }
    )
    names = [m.name for m in config.methods]
    assert names == ["cw", "cw-mis", "cw+ci-lin", "naive"]
    mis = config.methods[1]
    assert (mis.method, mis.rho_used.resolve(0.0)) == ("cw", Rho(-0.25))
    assert config.methods[2].c == 0.5
    assert config.methods[3].rho_used == RhoRule("fixed", -1.0)


def test_dict_round_trip() -> None:
    config = ExperimentConfig.from_dict(
        {
            "experiment": {"alpha": 0.2, "replications": 3, "seed": 9, "threads": 2},
            "grid": {"rho": [0.0, 0.5], "n": [500], "noise": ["laplace/frank"]},
            "learner": {"trees": 50, "min_leaf": 5},
            "bootstrap": {"B": 60},
            "methods": {"cw": {}, "mis": {"method": "cw", "rho_used": "misspecified(0.5)"}},
            "output": {"results": "out/results.csv", "record_runtime": True},
        }
    )
    assert ExperimentConfig.from_dict(config.to_dict()) == config
    assert json.loads(json.dumps(config.to_dict())) == config.to_dict()


def test_load_toml(tmp_path) -> None:
    path = tmp_path / "study.toml"
    path.write_text("[experiment]\nalpah = 0.1\n", encoding="utf-8")
    with pytest.raises(ConfigurationError, match="experiment.alpah"):
        load_config(path)

    path.write_text(
        'methods = ["cw", "naive"]\n\n[experiment]\nreplications = 2\nseed = 42\n\n'
        '[grid]\nrho = [0.0, 1.0]\nd = [1, 5]\n\n[learner]\nkind = "linear"\n',
        encoding="utf-8",
    )
    config = load_config(path)
    assert config.seed == 42
    assert config.grid.rho == (0.0, 1.0)
    assert config.grid.d == (1, 5)
    assert config.learner.kind == "linear"
    assert [m.name for m in config.methods] == ["cw", "naive"]


def test_load_manifest(tmp_path) -> None:
    config = ExperimentConfig(replications=4, seed=3)
    path = tmp_path / "run.manifest.json"
    path.write_text(
        json.dumps({"crossworld_version": "2026.10.17", "config": config.to_dict()}),
        encoding="utf-8",
    )
    assert load_config(path) == config


def test_load_failures(tmp_path) -> None:
    with pytest.raises(ConfigurationError, match="cannot read"):
        load_config(tmp_path / "absent.toml")
    path = tmp_path / "broken.toml"
    path.write_text("[experiment\n", encoding="utf-8")
    with pytest.raises(ConfigurationError, match="cannot parse"):
        load_config(path)
