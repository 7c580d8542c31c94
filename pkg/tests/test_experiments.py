from pathlib import Path

import numpy as np
import pytest
import yaml

from otfs_cf.experiments import (SCHEMA_VERSION, cdf_table, compare_modulations, config_from_dict, emit_cdf,
                                 emit_csv, load_config, parse_csv, report_to_csv, run_scenario, validate)
from otfs_cf.se_closed_form import power_scaling_limit

SCENARIOS = sorted((Path(__file__).parent.parent / "scenarios").glob("*.yaml"))


def tiny(**over):
    d = {
        "name": "tiny",
        "system": {"M": 8, "N": 8},
        "channel": {"profile": "EVB"},
        "geometry": {"num_aps": 4, "num_users": 2},
        "evaluation": {"metrics": ["otfs_ep_dl", "ofdm_bt_dl"]},
        "run": {"drops": 3, "seed": 5},
    }
    for k, v in over.items():
        d.setdefault(k, {})
        if isinstance(v, dict):
            d[k].update(v)
        else:
            d[k] = v
    return config_from_dict(d)


@pytest.mark.parametrize("path", SCENARIOS, ids=[p.stem for p in SCENARIOS])
def test_committed_scenarios_validate(path):
    validate(load_config(path))


def test_unknown_keys_rejected():
    with pytest.raises(ValueError, match="unknown keys"):
        config_from_dict({"bogus": 1})
    with pytest.raises(ValueError, match="unknown keys"):
        config_from_dict({"system": {"MM": 3}})
    with pytest.raises(ValueError, match="schema version"):
        config_from_dict({"schema_version": SCHEMA_VERSION + 1})


def test_yaml_scalars_coerced():
    cfg = config_from_dict(yaml.safe_load("system: {carrier_hz: 4.0e9, M: 8.0}"))
    assert cfg.system.carrier_hz == 4e9 and isinstance(cfg.system.M, int)
    with pytest.raises(ValueError):
        config_from_dict({"system": {"M": 8.5}})
    with pytest.raises(ValueError):
        config_from_dict({"system": {"M": None}})


def test_constraints_checked_before_running():
    with pytest.raises(ValueError, match="EP capacity"):
        run_scenario(tiny(geometry={"num_users": 100}))
    with pytest.raises(ValueError, match="dense cap"):
        validate(tiny(evaluation={"metrics": ["ul_l2_mr"]}, geometry={"num_aps": 100}))
    with pytest.raises(ValueError, match="unknown metric"):
        validate(tiny(evaluation={"metrics": ["nope"]}))
    with pytest.raises(ValueError, match="delay"):
        validate(tiny(system={"M": 2, "delta_f": 240e3}))


def test_report_statistics_ordered():
    rep = run_scenario(tiny())
    for r in rep.aggregates():
        assert r["p5"] <= r["median"] <= r["max"]
    assert rep.values["otfs_ep_dl"].shape == (1, 3, 2)


def test_determinism_and_worker_independence():
    a = report_to_csv(run_scenario(tiny()))
    b = report_to_csv(run_scenario(tiny()))
    c = report_to_csv(run_scenario(tiny(), workers=2))
    assert a == b == c
    assert "# seed: 5" in a and "# schema_version" in a


def test_empty_report_is_header_only(tmp_path):
    rep = run_scenario(tiny(run={"drops": 0}))
    text = emit_csv(rep, tmp_path / "e.csv").read_text()
    rows, agg = parse_csv(text)
    assert rows == [] and agg == []
    assert "point,drop,user,otfs_ep_dl,ofdm_bt_dl" in text


def test_round_trip_reproduces_aggregates(tmp_path):
    rep = run_scenario(tiny())
    rows, agg = parse_csv(emit_csv(rep, tmp_path / "r.csv").read_text())
    assert len(rows) == 3 * 2
    for parsed, orig in zip(agg, rep.aggregates()):
        for k in ("mean", "stderr", "median", "p5", "max", "sum_mean", "sum_stderr"):
            assert parsed[k] == orig[k]
    assert [r["otfs_ep_dl"] for r in rows] == list(rep.values["otfs_ep_dl"][0].ravel())


def test_cdf_quantile_matches_p5(tmp_path):
    rep = run_scenario(tiny(run={"drops": 7}))
    v, q = cdf_table(rep, "otfs_ep_dl")
    assert np.all(np.diff(v) >= 0) and np.all(np.diff(q) > 0)
    assert np.interp(0.05, q, v) == pytest.approx(rep.stat("otfs_ep_dl", "p5"), rel=1e-12)
    assert emit_cdf(rep, tmp_path / "c.csv").exists()


def test_compare_identical_and_mismatched():
    a = run_scenario(tiny())
    rows = compare_modulations(a, run_scenario(tiny()))
    assert all(v == 1.0 for r in rows for k, v in r.items() if k != "point")
    with pytest.raises(ValueError, match="drop counts"):
        compare_modulations(a, run_scenario(tiny(run={"drops": 2})))


def test_user_sweep_pads_missing_users():
    rep = run_scenario(tiny(sweep={"param": "geometry.num_users", "values": [1, 2]}))
    v = rep.values["otfs_ep_dl"]
    assert np.isnan(v[0, :, 1]).all() and not np.isnan(v[1]).any()
    rows, _ = parse_csv(report_to_csv(rep))
    assert len(rows) == 3 * 1 + 3 * 2


def test_downlink_saturates_toward_limit():
    cfg = load_config(Path(__file__).parent.parent / "scenarios" / "dl_vs_aps.yaml")
    rep = run_scenario(cfg)
    means = [rep.stat("otfs_ep_dl", "mean", i) for i in range(len(rep.points))]
    steps = np.diff(means)
    assert np.all(steps > 0)
    assert steps[-1] < 0.5 * steps[-2]


ALPHAS = [0.02, 0.3, 0.9, 0.95, 0.99, 0.995, 0.9999]


def test_alpha_sweep_has_interior_maximum():
    cfg = tiny(evaluation={"metrics": ["otfs_ep_ul", "otfs_sp_ul"]},
               sweep={"param": "power.alpha_che", "values": ALPHAS})
    rep = run_scenario(cfg)
    for m in ("otfs_ep_ul", "otfs_sp_ul"):
        means = [rep.stat(m, "mean", i) for i in range(len(ALPHAS))]
        assert 0 < int(np.argmax(means)) < len(ALPHAS) - 1
