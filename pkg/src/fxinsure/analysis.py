"""Cross-market comparisons, figure data and the verification suite."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import closed_form as cf
from . import montecarlo as mc
from . import oracle
from .market import OUParams, ValidatedConfig, table_config

__all__ = [
    "ComparisonReport",
    "compare_markets",
    "reproduce_figures",
    "write_csv",
    "format_number",
    "Check",
    "VerifyReport",
    "run_verify_suite",
]

# differences below this are reported as ties
TIE_TOL = 1e-12


def format_number(v: float) -> str:
    return f"{float(v):.12g}"


def write_csv(path: Path, header: Sequence[str], columns: Sequence[np.ndarray]) -> None:
    rows = [",".join(header)]
    for vals in zip(*columns):
        rows.append(",".join(format_number(v) for v in vals))
    Path(path).write_text("\n".join(rows) + "\n")


def _order(diff: np.ndarray, scale: float = 1.0) -> str:
    tol = TIE_TOL * max(scale, 1.0)
    if np.all(np.abs(diff) <= tol):
        return "equal"
    if np.all(diff > tol):
        return "foreign"
    if np.all(diff < -tol):
        return "domestic"
    return "mixed"


@dataclass(frozen=True, eq=False)
class ComparisonReport:
    """Foreign-market versus domestic-only curves on a common time grid.

    Orderings read ``"foreign"``, ``"domestic"``, ``"equal"`` or ``"mixed"`` and are
    computed from the curves (values on ``t < T`` only).
    """

    t: np.ndarray
    pi_foreign: np.ndarray
    pi_domestic: np.ndarray
    v_foreign: np.ndarray
    v_domestic: np.ndarray
    foreign_market: str
    flags: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {"foreign_market": self.foreign_market, "flags": self.flags, "verdicts": self.verdicts,
                "V_foreign_0": float(self.v_foreign[0]), "V_domestic_0": float(self.v_domestic[0]),
                "pi_foreign_0": float(self.pi_foreign[0]), "pi_domestic_0": float(self.pi_domestic[0])}


def _cmp(a: float, b: float) -> str:
    if math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-15):
        return "="
    return ">" if a > b else "<"


def compare_markets(cfg: ValidatedConfig, x0: float | None = None, ou: OUParams | None = None,
                    n: int = 400) -> ComparisonReport:
    """Compare the foreign market (GBM exchange rate, or OU when ``ou`` is given)
    with the domestic-only market, at wealth ``x0`` along an ``n``-point grid."""
    p = cfg.params
    x0 = p.x0 if x0 is None else x0
    foreign = cfg.as_market("ou", ou) if ou is not None else cfg.as_market("gbm")
    domestic = cfg.as_market("domestic")
    t = np.linspace(0.0, p.T, n)
    m0 = foreign.ou.m0
    pi_f = np.asarray(cf.optimal_strategy(foreign, t, m0))
    pi_d = np.asarray(cf.optimal_strategy(domestic, t))
    v_f = np.asarray(cf.value_function(foreign, t, x0, m0))
    v_d = np.asarray(cf.value_function(domestic, t, x0))

    excess_d = p.u_d - p.r_d
    sharpe_f = p.a1**2 / p.foreign_var
    sharpe_d = excess_d**2 / p.sigma_d**2
    flags = {
        "sigma_d2_A1": p.sigma_d**2 * p.a1,
        "vbar_excess_d": p.foreign_var * excess_d,
        "strategy_condition": _cmp(p.sigma_d**2 * p.a1, p.foreign_var * excess_d),
        "uf_plus_uQ": p.u_f + p.u_Q,
        "u_d": p.u_d,
        "return_condition": _cmp(p.u_f + p.u_Q, p.u_d),
        "sharpe_foreign": sharpe_f,
        "sharpe_domestic": sharpe_d,
        "sharpe_condition": _cmp(sharpe_f, sharpe_d),
    }
    inner = t < p.T
    value_order = _order(v_f[inner] - v_d[inner])
    strategy_order = _order(pi_f - pi_d, float(np.max(np.abs(pi_d))))
    predicted = {">": "foreign", "<": "domestic", "=": "equal"}[flags["sharpe_condition"]]
    verdicts = {
        # (i) the value ordering follows the squared excess-return-to-variance terms
        "clause_i": {"value_order": value_order, "predicted": predicted,
                     "consistent": value_order == predicted if ou is None else None},
        # (ii) at equal values, which market needs the larger holding
        "clause_ii": {"values_equal": value_order == "equal", "larger_holding": strategy_order},
        # (iii) larger foreign holding together with the value ordering
        "clause_iii": {"return_condition": flags["return_condition"], "larger_holding": strategy_order,
                       "value_order": value_order},
        "terminal_equal": bool(v_f[-1] == v_d[-1]),
    }
    return ComparisonReport(t, pi_f, pi_d, v_f, v_d, foreign.kind, flags, verdicts)


def reproduce_figures(table_id: int, out_dir: str | Path, ou: OUParams | None = None,
                      n: int = 400) -> list[Path]:
    """Write ``strategies_<id>.csv`` and ``values_<id>.csv`` for a parameter table."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = table_config(table_id)
    rep = compare_markets(cfg, ou=ou, n=n)
    s_path = out / f"strategies_{table_id}.csv"
    v_path = out / f"values_{table_id}.csv"
    write_csv(s_path, ("t", "pi_foreign", "pi_domestic"), (rep.t, rep.pi_foreign, rep.pi_domestic))
    write_csv(v_path, ("t", "V_foreign", "V_domestic"), (rep.t, rep.v_foreign, rep.v_domestic))
    return [s_path, v_path]


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tol: float
    passed: bool
    detail: str = ""


@dataclass
class VerifyReport:
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def format(self) -> str:
        w = max(len(c.name) for c in self.checks)
        lines = [f"{'check':<{w}}  {'max residual':>13}  {'tolerance':>10}  result"]
        for c in self.checks:
            lines.append(f"{c.name:<{w}}  {c.value:>13.3e}  {c.tol:>10.1e}  {'PASS' if c.passed else 'FAIL'}"
                         + (f"  {c.detail}" if c.detail else ""))
        return "\n".join(lines)


SWEEP_ALPHAS = (-1.0, -0.5, 0.5)
SWEEP_BETAS = (0.1, 0.3, 1.0)


def riccati_sweep_error(cfg: ValidatedConfig, steps: int = 4000) -> float:
    """Sup-norm gap between closed-form and RK4 K over the alpha/beta sweep."""
    worst = 0.0
    for a in SWEEP_ALPHAS:
        for b in SWEEP_BETAS:
            c = cfg.as_market("ou", OUParams(a, b, 0.0))
            t, y = oracle.rk4_backward(oracle.riccati_problem(c, steps))
            worst = max(worst, float(np.max(np.abs(cf.solve_k(c, t) - y[:, 0]))))
    return worst


def rk4_order_ratio(cfg: ValidatedConfig, coarse: int = 32) -> float:
    c = cfg.as_market("ou", OUParams(-0.5, 0.3, 0.0))
    exact = float(cf.k_closed(c, c.params.T))
    errs = [abs(oracle.rk4_backward(oracle.riccati_problem(c, n))[1][0, 0] - exact) for n in (coarse, 2 * coarse)]
    return errs[0] / errs[1]


def hjb_grid(cfg: ValidatedConfig, table=None, n: int = 20, x_range=(-2.0, 6.0), m_range=(-1.0, 1.0)):
    """Max |HJB residual| and max concavity coefficient over an n^3 (t, x, m) grid."""
    T = cfg.params.T
    t, x, m = np.meshgrid(np.linspace(0, T, n), np.linspace(*x_range, n), np.linspace(*m_range, n), indexing="ij")
    res, conc = cf.hjb_residual(cfg, t, x, m, table)
    return float(np.max(np.abs(res))), float(np.max(conc))


def fd_partials(cfg: ValidatedConfig, t: float, x: float, m: float, table=None) -> dict[str, oracle.FDReport]:
    """Central-difference checks of every partial derivative of the ansatz."""
    if cfg.kind == "ou" and table is None:
        table = cf.coefficient_table(cfg)
    d = cf.value_partials(cfg, t, x, m, table)
    V = lambda tt, xx, mm: float(cf.value_function(cfg, tt, xx, mm, table))  # noqa: E731
    hs = (1e-2, 3e-3, 1e-3, 3e-4, 1e-4)
    out = {
        "V_t": oracle.finite_diff_check(lambda s: V(s, x, m), t, float(d["V_t"]), hs),
        "V_x": oracle.finite_diff_check(lambda s: V(t, s, m), x, float(d["V_x"]), hs),
        "V_xx": oracle.finite_diff_check(lambda s: V(t, s, m), x, float(d["V_xx"]), hs, order=2),
    }
    if cfg.kind == "ou":
        out["V_m"] = oracle.finite_diff_check(lambda s: V(t, x, s), m, float(d["V_m"]), hs)
        out["V_mm"] = oracle.finite_diff_check(lambda s: V(t, x, s), m, float(d["V_mm"]), hs, order=2)
    return out


def run_verify_suite(cfg: ValidatedConfig, grid: int = cf.DEFAULT_GRID, mc_paths: int = 20000,
                     mc_steps: int = 500, seed: int = 2024, table: cf.CoefficientTable | None = None,
                     log: Callable[[str], None] | None = None) -> VerifyReport:
    """Run every closed-form, oracle and Monte Carlo check on ``cfg``.

    ``cfg`` supplies market, utility and OU parameters. ``table`` overrides the
    coefficient table (used to inject faults). ``mc_paths=0`` skips the simulation checks.
    """
    rep = VerifyReport()
    ou_cfg = cfg.as_market("ou")
    table = table if table is not None else cf.build_table(ou_cfg, grid)
    p, T = cfg.params, cfg.params.T

    def add(name, value, tol, passed=None, detail=""):
        ok = bool(value <= tol) if passed is None else bool(passed)
        rep.checks.append(Check(name, float(value), float(tol), ok, detail))
        if log:
            log(f"{name}: {'PASS' if ok else 'FAIL'}")

    add("riccati_vs_rk4_sweep", riccati_sweep_error(cfg), 1e-8)
    ratio = rk4_order_ratio(cfg)
    add("rk4_convergence_order", abs(ratio - 16), 4.0, 12 <= ratio <= 20, f"ratio={ratio:.2f}")

    rk = oracle.solve_coefficients_rk4(ou_cfg, grid - 1)
    add("coefficients_vs_rk4", max(float(np.max(np.abs(rk[n] - getattr(table, n)))) for n in "KLJ"), 1e-8)
    for name, r in cf.ode_residuals(ou_cfg, table).items():
        add(f"ode_residual_{name}", r, 1e-6)
    add("K_nonpositive", float(np.max(table.K)), 0.0)

    res, conc = hjb_grid(ou_cfg, table)
    add("hjb_residual", res, 1e-6)
    add("hjb_concavity", conc, 0.0, conc < 0)

    fd = fd_partials(ou_cfg, min(1.0, T / 2), 2.0, 0.1, table)
    add("finite_difference_partials", max(r.best_rel_error for r in fd.values()), 1e-5)

    k_small = cf.k_closed(ou_cfg.with_params(beta=1e-4), T - table.grid)
    k_zero = cf.k_closed(ou_cfg.with_params(beta=0.0), T - table.grid)
    add("beta_branch_continuity", float(np.max(np.abs(k_small - k_zero))), 1e-5)

    zero_ou = cfg.as_market("ou", OUParams())
    gbm = cfg.as_market("gbm")
    rng = np.random.default_rng(seed)
    ts, xs = rng.uniform(0, T, 100), rng.uniform(-2, 6, 100)
    gap = max(float(np.max(np.abs(cf.value_function(zero_ou, ts, xs, 0.0) - cf.value_function(gbm, ts, xs)))),
              float(np.max(np.abs(cf.optimal_strategy(zero_ou, ts, 0.0) - cf.optimal_strategy(gbm, ts)))))
    add("gbm_reduction", gap, 1e-9)

    b0 = ou_cfg.with_params(beta=0.0)
    grid_t = cf.uniform_grid(T, grid)
    j0 = cf.solve_j(b0, cf.solve_k(b0, grid_t), cf.solve_l(b0, cf.solve_k(b0, grid_t), grid_t), grid_t)
    add("beta0_J_equals_f", float(np.max(np.abs(j0 - cf.f_exponent(gbm, T - grid_t)))), 1e-12)

    th, r = cfg.utility.theta, p.r_d
    base = lambda s: -th * p.u * math.exp(r * s) + 0.5 * th**2 * p.sigma**2 * math.exp(2 * r * s)  # noqa: E731
    f_q = oracle.adaptive_simpson(lambda s: base(s) - p.a1**2 / (2 * p.foreign_var), 0.0, T, 1e-11)
    g_q = oracle.adaptive_simpson(lambda s: base(s) - (p.u_d - r) ** 2 / (2 * p.sigma_d**2), 0.0, T, 1e-11)
    add("exponents_vs_quadrature", max(abs(f_q - cf.f_exponent(gbm, T)), abs(g_q - cf.g_exponent(gbm, T))), 1e-9)

    xs_b = np.linspace(-2, 6, 9)
    worst = 0.0
    for kind in ("ou", "gbm", "domestic"):
        c = cfg.as_market(kind)
        tb = table if kind == "ou" else None
        worst = max(worst, float(np.max(np.abs(cf.value_function(c, T, xs_b, 0.3, tb) - cfg.utility(xs_b)))))
    add("terminal_condition", worst, 0.0)

    tt, xx = np.meshgrid(np.linspace(0, T, 25), np.linspace(-2, 6, 25))
    mono_ok, below = True, True
    for kind in ("ou", "gbm", "domestic"):
        c = cfg.as_market(kind)
        d = cf.value_partials(c, tt, xx, 0.2, table if kind == "ou" else None)
        mono_ok &= bool(np.all(d["V_x"] > 0) and np.all(np.diff(d["V"], axis=0) > 0))
        below &= bool(np.all(d["V"] < cfg.utility.lam))
    add("monotone_and_bounded", 0.0, 0.0, mono_ok and below)

    zero_r = cfg.with_params(r_d=0.0)
    flat = all(np.ptp(cf.optimal_strategy(zero_r.as_market(k), np.linspace(0, T, 50))) == 0 for k in ("gbm", "domestic"))
    add("zero_rate_constant_strategy", 0.0, 0.0, flat)

    if mc_paths > 0:
        sim = mc.SimConfig(mc_paths, mc_steps, seed)
        worst_z = 0.0
        for kind in ("ou", "gbm", "domestic"):
            c = cfg.as_market(kind)
            res_mc = mc.estimate_utility(c, sim)
            v = cf.value_function(c, 0.0, p.x0, c.ou.m0, table if kind == "ou" else None)
            worst_z = max(worst_z, abs(res_mc.estimate - v) / max(res_mc.std_error, 1e-300))
        add("mc_vs_analytic_zscore", worst_z, 3.0)
        if p.a1 != 0:
            factors = (0.0, 0.5, 1.0, 1.5, 2.0)
            sweep = mc.strategy_sweep(cfg.as_market("gbm"), sim, factors)
            best = factors[int(np.argmax([s.estimate for s in sweep]))]
            add("mc_sweep_argmax", abs(best - 1.0), 0.0, detail=f"best factor={best}")
    return rep
