import math

import numpy as np
import pytest

from fxinsure import analysis as an
from fxinsure import closed_form as cf
from fxinsure.market import OUParams, table_config

U_X2 = 1 - math.exp(-2.0)


def test_table1_strategies_coincide_and_foreign_dominates():
    rep = an.compare_markets(table_config(1))
    assert np.max(np.abs(rep.pi_foreign - rep.pi_domestic)) <= 1e-12
    inner = rep.t < 4
    assert np.all(rep.v_foreign[inner] > rep.v_domestic[inner])
    assert rep.v_foreign[-1] == rep.v_domestic[-1] == pytest.approx(U_X2, abs=1e-15)
    assert rep.flags["strategy_condition"] == "="
    assert rep.flags["sigma_d2_A1"] == pytest.approx(0.08, abs=1e-15)
    assert rep.verdicts["clause_i"] == {"value_order": "foreign", "predicted": "foreign", "consistent": True}
    assert rep.verdicts["terminal_equal"] is True


def test_table1_initial_values():
    s = an.compare_markets(table_config(1)).summary()
    assert s["V_foreign_0"] == pytest.approx(0.996721304544346, abs=1e-13)
    assert s["V_domestic_0"] == pytest.approx(0.995108761143212, abs=1e-13)
    assert s["pi_foreign_0"] == pytest.approx(0.670320046035639, abs=1e-13)


def test_table2_equal_values_larger_domestic_holding():
    rep = an.compare_markets(table_config(2))
    np.testing.assert_allclose(rep.v_foreign, rep.v_domestic, rtol=0, atol=1e-14)
    # the holdings differ by the variance ratio 0.32 / 0.16
    np.testing.assert_allclose(rep.pi_domestic, 2 * rep.pi_foreign, rtol=1e-13)
    assert rep.verdicts["clause_ii"] == {"values_equal": True, "larger_holding": "domestic"}
    assert rep.flags["sharpe_condition"] == "="


def test_table3_foreign_holds_more_and_dominates():
    rep = an.compare_markets(table_config(3))
    disc = np.exp(-0.1 * (4 - rep.t))
    np.testing.assert_allclose(rep.pi_foreign, 1.6 * disc, rtol=1e-13)
    np.testing.assert_allclose(rep.pi_domestic, 1.25 * disc, rtol=1e-13)
    v = rep.verdicts["clause_iii"]
    assert v == {"return_condition": ">", "larger_holding": "foreign", "value_order": "foreign"}


def test_ou_comparison_uses_deviation():
    rep = an.compare_markets(table_config(1), ou=OUParams(-0.5, 0.3, 0.2))
    assert rep.foreign_market == "ou"
    assert rep.verdicts["clause_i"]["consistent"] is None
    assert rep.pi_foreign[0] == pytest.approx((0.4 + 0.2) / 0.4 * math.exp(-0.4), rel=1e-13)


def test_compare_at_other_wealth():
    rep = an.compare_markets(table_config(1), x0=0.5, n=11)
    assert rep.t.size == 11
    assert rep.v_foreign[-1] == pytest.approx(1 - math.exp(-0.5), abs=1e-15)


@pytest.mark.parametrize("table_id", [1, 2, 3])
def test_reproduce_writes_deterministic_csv(tmp_path, table_id):
    a = an.reproduce_figures(table_id, tmp_path / "a")
    b = an.reproduce_figures(table_id, tmp_path / "b")
    assert [p.name for p in a] == [f"strategies_{table_id}.csv", f"values_{table_id}.csv"]
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()
    rows = a[1].read_text().splitlines()
    assert rows[0] == "t,V_foreign,V_domestic"
    t, vf, vd = map(float, rows[-1].split(","))
    assert t == 4.0
    assert vf == vd == pytest.approx(U_X2, abs=1e-12)
    assert len(rows) == 401


def test_reproduce_table3_ordering(tmp_path):
    _, values = an.reproduce_figures(3, tmp_path)
    data = np.loadtxt(values, delimiter=",", skiprows=1)
    assert np.all(data[:-1, 1] > data[:-1, 2])


def test_format_number_round_trips():
    for v in (0.1, -2.5e-7, 0.996721304544346, 4.0):
        assert float(an.format_number(v)) == pytest.approx(v, rel=1e-12)


@pytest.fixture(scope="module")
def table1_report():
    cfg = table_config(1, alpha=-0.5, beta=0.3, m0=0.2)
    return an.run_verify_suite(cfg, mc_paths=4000, mc_steps=200)


def test_verify_suite_passes_on_table1(table1_report):
    assert table1_report.passed, table1_report.format()
    names = {c.name for c in table1_report.checks}
    assert {"riccati_vs_rk4_sweep", "hjb_residual", "hjb_concavity", "gbm_reduction",
            "terminal_condition", "mc_vs_analytic_zscore", "mc_sweep_argmax"} <= names
    assert "PASS" in table1_report.format()


def test_verify_suite_passes_without_deviation_noise():
    rep = an.run_verify_suite(table_config(1, alpha=-0.5, beta=0.0, m0=0.2), mc_paths=0)
    assert rep.passed, rep.format()
    assert "mc_vs_analytic_zscore" not in {c.name for c in rep.checks}


def test_verify_suite_detects_corrupted_k():
    cfg = table_config(1, alpha=-0.5, beta=0.3, m0=0.2)
    good = cf.build_table(cfg, cf.DEFAULT_GRID)
    bad = good.with_values(K=good.K + 1e-3)
    rep = an.run_verify_suite(cfg, mc_paths=0, table=bad)
    failed = {c.name for c in rep.failures()}
    assert "hjb_residual" in failed
    assert not rep.passed


def test_hjb_grid_small_on_good_table():
    cfg = table_config(1, alpha=-0.5, beta=0.3, m0=0.2)
    res, conc = an.hjb_grid(cfg, cf.coefficient_table(cfg), n=8)
    assert res <= 1e-6
    assert conc < 0


def test_rk4_order_ratio_near_sixteen():
    assert 14 <= an.rk4_order_ratio(table_config(1)) <= 19
