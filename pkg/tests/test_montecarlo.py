import math
from dataclasses import replace

import numpy as np
import pytest

from fxinsure import montecarlo as mc
from fxinsure.market import ValidatedConfig

X4_ZERO_NOISE = 4.95094818584762  # 6 e^{0.4} - 4
U_X4 = 0.992923304275861


def _noiseless(cfg):
    # sigma = 0 is outside the validated domain; build the wrapper directly
    return ValidatedConfig(replace(cfg.market, params=replace(cfg.params, sigma=0.0)), cfg.utility)


@pytest.mark.parametrize("steps", [1, 7, 400])
def test_zero_noise_surplus_is_exact(t1_gbm, steps):
    cfg = _noiseless(t1_gbm)
    sim = mc.SimConfig(paths=1, steps=steps, seed=5, strategy=mc.Strategy.zero())
    state = mc.simulate_path(cfg, sim, 0)
    assert state.X == pytest.approx(X4_ZERO_NOISE, rel=1e-14)
    assert state.X == pytest.approx(6 * math.exp(0.4) - 4, rel=1e-14)
    res = mc.estimate_utility(cfg, sim)
    assert res.estimate == pytest.approx(U_X4, rel=1e-14)
    assert res.std_error == 0.0


def test_zero_noise_many_paths_have_zero_error(t1_ou):
    cfg = _noiseless(t1_ou)
    res = mc.estimate_utility(cfg, mc.SimConfig(50, 20, 1, mc.Strategy.zero()))
    assert res.estimate == pytest.approx(U_X4, rel=1e-13)
    assert res.std_error == pytest.approx(0.0, abs=1e-15)


def test_constant_deviation_when_alpha_beta_zero(t1_ou):
    cfg = t1_ou.with_params(alpha=0.0, beta=0.0, m0=0.35)
    out = mc.simulate_paths(cfg, mc.SimConfig(3, 50, 9), [0, 1, 2])
    assert np.all(out["m"] == 0.35)
    assert out["t"][0] == 0.0 and out["t"][-1] == 4.0
    assert out["X"].shape == (3, 51)


def test_same_seed_same_result(t1_ou):
    sim = mc.SimConfig(300, 40, 11)
    a = mc.estimate_utility(t1_ou, sim)
    b = mc.estimate_utility(t1_ou, sim)
    assert a == b


def test_different_seed_different_result(t1_ou):
    a = mc.estimate_utility(t1_ou, mc.SimConfig(300, 40, 11))
    b = mc.estimate_utility(t1_ou, mc.SimConfig(300, 40, 12))
    assert a.estimate != b.estimate


def test_worker_count_does_not_change_bits(t1_ou):
    sim = mc.SimConfig(2 * mc.BLOCK + 17, 30, 3)
    a = mc.estimate_utility(t1_ou, sim, workers=1)
    b = mc.estimate_utility(t1_ou, sim, workers=3)
    assert a.to_dict() == b.to_dict()


def test_path_is_function_of_seed_and_index(t1_ou):
    sim = mc.SimConfig(10, 25, 77)
    alone = mc.simulate_path(t1_ou, sim, 6)
    batch = mc.terminal_states(t1_ou, sim)
    assert batch["X"][6] == alone.X
    assert batch["m"][6] == alone.m
    assert batch["Q"][6] * batch["Sf"][6] == pytest.approx(alone.g, rel=1e-15)


def test_recorded_trajectory_matches_terminal(t1_ou):
    sim = mc.SimConfig(4, 60, 8)
    traj = mc.simulate_paths(t1_ou, sim, range(4))
    term = mc.terminal_states(t1_ou, sim)
    for key in ("X", "m", "Q", "Sf"):
        np.testing.assert_array_equal(traj[key][:, -1], term[key])


def test_ou_transition_moments(t1_ou):
    cfg = t1_ou.with_params(alpha=-0.5, beta=0.3, m0=0.2)
    term = mc.terminal_states(cfg, mc.SimConfig(100_000, 8, 21))
    a, b, T = -0.5, 0.3, 4.0
    mean = 0.2 * math.exp(a * T)
    var = b * b * math.expm1(2 * a * T) / (2 * a)
    se = math.sqrt(var / 100_000)
    assert abs(term["m"].mean() - mean) < 4 * se
    assert term["m"].var(ddof=1) == pytest.approx(var, rel=0.02)


def test_price_means_when_deviation_is_frozen(t1_gbm):
    term = mc.terminal_states(t1_gbm, mc.SimConfig(100_000, 10, 4))
    p = t1_gbm.params
    for key, mu, s in (("Q", p.u_Q, p.sigma_Q), ("Sf", p.u_f, p.sigma_f)):
        mean = math.exp(mu * p.T)
        sd = mean * math.sqrt(math.expm1(s * s * p.T))
        assert abs(term[key].mean() - mean) < 4 * sd / math.sqrt(100_000)


def test_zero_rate_constant_strategy_mean(t1_gbm):
    # with r_d = 0 the surplus mean is x0 + (u + c*a1) T regardless of steps
    cfg = t1_gbm.with_params(r_d=0.0)
    c = 0.5
    term = mc.terminal_states(cfg, mc.SimConfig(40_000, 5, 2, mc.Strategy.constant(c)))
    p = cfg.params
    mean = p.x0 + (p.u + c * p.a1) * p.T
    sd = math.sqrt((p.sigma**2 + c * c * p.foreign_var) * p.T)
    assert abs(term["X"].mean() - mean) < 4 * sd / math.sqrt(40_000)


def test_utility_estimate_bounded_by_lambda(t1_dom):
    res = mc.estimate_utility(t1_dom, mc.SimConfig(500, 50, 0))
    assert res.estimate < t1_dom.utility.lam
    assert res.std_error > 0
    assert res.market == "domestic" and res.strategy == "optimal"


def test_scaled_one_equals_optimal(t1_ou):
    sim = mc.SimConfig(200, 30, 6)
    a = mc.estimate_utility(t1_ou, sim)
    b = mc.estimate_utility(t1_ou, replace(sim, strategy=mc.Strategy.scaled(1.0)))
    assert a.estimate == b.estimate


def test_sweep_uses_common_noise(t1_gbm):
    sim = mc.SimConfig(300, 30, 6)
    sweep = mc.strategy_sweep(t1_gbm, sim, [0.0, 1.0])
    zero = mc.estimate_utility(t1_gbm, replace(sim, strategy=mc.Strategy.zero()))
    opt = mc.estimate_utility(t1_gbm, sim)
    assert sweep[0].estimate == zero.estimate
    assert sweep[1].estimate == opt.estimate
    assert sweep[0].strategy == "scaled:0.0"


def test_sweep_peaks_at_optimal_factor(t1_gbm):
    factors = [0.0, 0.5, 1.0, 1.5, 2.0]
    res = mc.strategy_sweep(t1_gbm, mc.SimConfig(20_000, 100, 13), factors)
    best = max(range(len(factors)), key=lambda i: res[i].estimate)
    assert factors[best] == 1.0


def test_estimate_near_analytic_small_run(t1_gbm):
    res = mc.estimate_utility(t1_gbm, mc.SimConfig(20_000, 200, 2024))
    v = mc.analytic_value(t1_gbm)
    assert v == pytest.approx(0.996721304544346, abs=1e-12)
    assert abs(res.estimate - v) <= 4 * res.std_error


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_blow_up_reports_path_and_step(t1_gbm):
    cfg = ValidatedConfig(replace(t1_gbm.market, params=replace(t1_gbm.params, x0=1.7e308)), t1_gbm.utility)
    with pytest.raises(mc.PathBlowUp) as info:
        mc.estimate_utility(cfg, mc.SimConfig(3, 20, 0, mc.Strategy.zero()))
    assert info.value.path == 0
    assert info.value.step >= 1


@pytest.mark.parametrize("text, expected", [
    ("optimal", mc.Strategy.optimal()),
    ("zero", mc.Strategy.zero()),
    ("scaled:1.5", mc.Strategy.scaled(1.5)),
    ("constant:-2", mc.Strategy.constant(-2.0)),
])
def test_strategy_parse_roundtrip(text, expected):
    s = mc.Strategy.parse(text)
    assert s == expected
    assert mc.Strategy.parse(str(s)) == s


@pytest.mark.parametrize("text", ["", "scaled", "scaled:x", "optimal:2", "best"])
def test_strategy_parse_rejects(text):
    with pytest.raises(ValueError):
        mc.Strategy.parse(text)


@pytest.mark.parametrize("kw", [dict(paths=0, steps=1), dict(paths=1, steps=0), dict(paths=1, steps=1, seed=-1)])
def test_sim_config_validation(kw):
    with pytest.raises(ValueError):
        mc.SimConfig(**kw)
