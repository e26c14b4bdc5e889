import dataclasses

import numpy as np
import pytest

from harvest_assoc.scenario import (
    ScenarioError, config_to_dict, dump_scenario, load_scenario, parse_scenario, resolve_scenario,
    shipped_path, synthetic_scenario,
)
from harvest_assoc.sim import SimConfig

MINIMAL = """\
sbs:
- {lambda: 80, mu: 0.03, alpha: 10, q_max: 7, k: 50}
- {lambda: 70, mu: 0.06, alpha: 12, q_max: 8, k: 100}
links:
  F: [[0.9, 0.2]]
  G: [[0.8, 0.1]]
"""


def test_minimal_document_uses_defaults():
    cfg = parse_scenario(MINIMAL)
    defaults = SimConfig(cfg.sbs, cfg.F, cfg.G)
    assert cfg.n_sbs == 2 and cfg.n_users == 1
    assert cfg.r_min == (0.5,) and cfg.interference == (0.0, 0.0)
    for field in ("policy", "gamma", "trials", "multi", "service_time", "notify", "snapshot_every"):
        assert getattr(cfg, field) == getattr(defaults, field), field
    assert cfg.arms == (0, 1)


def test_table1_contents(table1):
    assert table1.n_sbs == 5 and table1.n_users == 2
    assert [c.k for c in table1.sbs] == [50, 100, 69, 40, 40]
    assert table1.sbs[0].mu == 0.03 and table1.sbs[3].lam == 130.0
    assert table1.interference == (1.0, 3.0, 2.0, 4.0, 2.0)
    assert table1.F[1, 2] == 1.0 and table1.G[0, 0] == 0.8
    assert (table1.trials, table1.gamma, table1.service_time) == (50_000, 0.05, 1.0)


@pytest.mark.parametrize("name", ["table1", "large8"])
def test_round_trip(name):
    cfg = load_scenario(shipped_path(name))
    again = parse_scenario(dump_scenario(cfg, "header line"))
    assert config_to_dict(again) == config_to_dict(cfg)


def test_round_trip_distinct_rates():
    cfg = parse_scenario(MINIMAL)
    sbs = (dataclasses.replace(cfg.sbs[0], mu_seq=(0.1, 0.2, 0.3), k=3), cfg.sbs[1])
    cfg = dataclasses.replace(cfg, sbs=sbs)
    assert parse_scenario(dump_scenario(cfg)).sbs[0].mu_seq == (0.1, 0.2, 0.3)


def test_large8_is_the_seed_eight_draw():
    assert config_to_dict(load_scenario(shipped_path("large8"))) == config_to_dict(synthetic_scenario(seed=8))


def test_synthetic_generator_ranges():
    cfg = synthetic_scenario(seed=3)
    assert cfg.n_sbs == 8 and cfg.n_users == 10
    assert all(70 <= c.lam <= 130 and 40 <= c.k <= 100 and 6 <= c.q_max <= 9 for c in cfg.sbs)
    assert all(0.03 <= c.mu <= 0.12 and 10 <= c.alpha <= 15 for c in cfg.sbs)
    assert np.all(cfg.G > 0) and np.all((cfg.F >= 0.05) & (cfg.F <= 1.0))
    assert config_to_dict(synthetic_scenario(seed=3)) == config_to_dict(cfg)


def where(text):
    with pytest.raises(ScenarioError) as info:
        parse_scenario(text, "net.yaml")
    return info.value


def test_unknown_key_reports_line_and_column():
    err = where(MINIMAL.replace("k: 50}", "k: 50, kk: 1}"))
    assert (err.line, err.field) == (2, "sbs.0.kk")
    assert str(err).startswith("net.yaml:2:")
    assert "unknown key" in str(err)


def test_bad_value_points_at_value():
    err = where(MINIMAL + "experiment:\n  trials: -4\n")
    assert (err.line, err.column, err.field) == (8, 11, "experiment.trials")
    assert "must be positive" in str(err)


@pytest.mark.parametrize("text,field,needle", [
    (MINIMAL.replace("F: [[0.9, 0.2]]", "F: [[0.9]]"), "links.F.0", "expected 2 entries"),
    (MINIMAL.replace("k: 100", "k: 1.5"), "sbs.1.k", "integer"),
    (MINIMAL.replace("mu: 0.03", "mu: [0.1, 0.2]"), "sbs.0.mu", "k=50 rates"),
    (MINIMAL + "experiment:\n  policy: greedy\n", "experiment.policy", "unknown policy"),
    (MINIMAL + "experiment:\n  arms: [1, 3]\n", "experiment.arms", "exceed M=2"),
    (MINIMAL + "extra: 1\n", "extra", "unknown key"),
    (MINIMAL.replace("  G: [[0.8, 0.1]]\n", ""), "links", "missing required key 'G'"),
])
def test_field_diagnostics(text, field, needle):
    err = where(text)
    assert err.field == field and needle in str(err)


def test_yaml_syntax_error_has_position():
    err = where("sbs: [\n")
    assert err.line is not None and "YAML syntax" in str(err)


def test_missing_file_names_path(tmp_path):
    missing = tmp_path / "nope.scenario"
    with pytest.raises(ScenarioError, match="nope.scenario"):
        load_scenario(missing)


def test_resolve_prefers_files(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert resolve_scenario("table1") == shipped_path("table1")
    (tmp_path / "table1").write_text(MINIMAL)
    assert resolve_scenario("table1").resolve() == (tmp_path / "table1").resolve()
    with pytest.raises(KeyError):
        shipped_path("table9")
