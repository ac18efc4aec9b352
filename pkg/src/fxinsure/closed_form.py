"""Analytic optimal strategy and value function.

The value function has the exponential form

    V(t, x, m) = lambda - gamma/theta * exp(-theta x e^{r_d (T-t)} + h(t, m))

with ``h = K m^2 + L m + J`` in the OU market and ``h = f(T-t)`` / ``g(T-t)`` in the
GBM / domestic-only markets. K solves a Riccati equation, L a linear equation driven
by K, and J is a quadrature. Everything is written in time-to-go ``tau = T - t``.

Writing ``s = sqrt(4 alpha^2 + 4 beta^2 / vbar)`` (``vbar = sigma_f^2 + sigma_Q^2``) and
``r1, r2 = -alpha +- s/2`` (the Riccati roots scaled by ``2 beta^2``), the solutions are

    K(tau) = D (1 - e^{-s tau}) / (r1 - r2 e^{-s tau}),       D = -1 / (2 vbar)
    L(tau) = -(A_1/vbar) (2/s) (1 - e^{-s tau/2}) (r1 - r2 e^{-s tau/2}) / (r1 - r2 e^{-s tau})

The denominators are positive for every tau >= 0, so neither form overflows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline

from .market import ConfigError, ValidatedConfig

__all__ = [
    "RiccatiRoots",
    "CoefficientTable",
    "riccati_roots",
    "uniform_grid",
    "solve_k",
    "solve_l",
    "solve_j",
    "k_closed",
    "l_closed",
    "build_table",
    "coefficient_table",
    "f_exponent",
    "g_exponent",
    "h_value",
    "value_function",
    "optimal_strategy",
    "value_partials",
    "hjb_residual",
    "ode_residuals",
    "DEFAULT_GRID",
]

DEFAULT_GRID = 2001
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


@dataclass(frozen=True)
class RiccatiRoots:
    """Coefficients of ``K' + B K^2 + C K + D = 0`` and the roots of its quadratic."""

    B: float
    C: float
    D: float
    K1: float
    K2: float

    @property
    def discriminant(self) -> float:
        return self.C**2 - 4 * self.B * self.D


def riccati_roots(cfg: ValidatedConfig) -> RiccatiRoots:
    """Roots ``K1 > K2`` of ``B K^2 + C K + D`` (requires ``beta != 0``)."""
    alpha, beta = cfg.ou.alpha, cfg.ou.beta
    if beta**2 == 0:
        raise ConfigError("Riccati roots are defined only for beta != 0")
    B, C = 2 * beta**2, 2 * alpha
    D = -1.0 / (2 * cfg.params.foreign_var)
    _, r1, r2, _ = _rates(cfg)
    return RiccatiRoots(B, C, D, r1 / B, r2 / B)


def _rates(cfg: ValidatedConfig) -> tuple[float, float, float, float]:
    """``(D, r1, r2, s)``; r1 >= 0 >= r2, computed without cancellation."""
    alpha, beta = cfg.ou.alpha, cfg.ou.beta
    vbar = cfg.params.foreign_var
    D = -1.0 / (2 * vbar)
    s = 2.0 * math.sqrt(alpha**2 + beta**2 / vbar)
    bd = -(beta**2) / vbar  # = r1 * r2
    if alpha > 0:
        r2 = -alpha - s / 2
        r1 = bd / r2
    else:
        r1 = -alpha + s / 2
        r2 = bd / r1 if r1 > 0 else 0.0
    return D, r1, r2, s


def k_closed(cfg: ValidatedConfig, tau) -> np.ndarray:
    """K as a function of time-to-go, vectorized."""
    tau = np.asarray(tau, dtype=float)
    alpha, beta = cfg.ou.alpha, cfg.ou.beta
    vbar = cfg.params.foreign_var
    if beta**2 != 0:
        # (K1 - rho K2)/(1 - rho) with rho = (K1/K2) e^{s tau}, divided through by rho
        D, r1, r2, s = _rates(cfg)
        e = np.exp(-s * tau)
        return D * -np.expm1(-s * tau) / (r1 - r2 * e)
    if alpha != 0:
        return -np.expm1(2 * alpha * tau) / (4 * alpha * vbar)
    return -tau / (2 * vbar)


def l_closed(cfg: ValidatedConfig, tau) -> np.ndarray:
    """L as a function of time-to-go, vectorized."""
    tau = np.asarray(tau, dtype=float)
    c = cfg.params.a1 / cfg.params.foreign_var
    D, r1, r2, s = _rates(cfg)
    if s == 0:
        return -c * tau
    ramp = -2.0 * np.expm1(-s * tau / 2) / s
    ratio = (r1 - r2 * np.exp(-s * tau / 2)) / (r1 - r2 * np.exp(-s * tau))
    return -c * ramp * ratio


def _surplus_exponent(cfg: ValidatedConfig, tau):
    """Exponent contribution of the surplus drift and volatility."""
    p, th = cfg.params, cfg.utility.theta
    r = p.r_d
    if r == 0:
        return -th * p.u * tau + th**2 * p.sigma**2 * tau / 2
    return -(th * p.u / r) * np.expm1(r * tau) + (th**2 * p.sigma**2 / (4 * r)) * np.expm1(2 * r * tau)


def _check_tau(cfg: ValidatedConfig, tau) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0) or np.any(tau > cfg.params.T):
        raise ValueError(f"time-to-go must lie in [0, {cfg.params.T}]")
    return tau


def f_exponent(cfg: ValidatedConfig, tau):
    """Exponent of the foreign GBM market at time-to-go ``tau``."""
    tau = _check_tau(cfg, tau)
    p = cfg.params
    out = _surplus_exponent(cfg, tau) - p.a1**2 * tau / (2 * p.foreign_var)
    return float(out) if out.ndim == 0 else out


def g_exponent(cfg: ValidatedConfig, tau):
    """Exponent of the domestic-only market at time-to-go ``tau``."""
    tau = _check_tau(cfg, tau)
    p = cfg.params
    out = _surplus_exponent(cfg, tau) - (p.u_d - p.r_d) ** 2 * tau / (2 * p.sigma_d**2)
    return float(out) if out.ndim == 0 else out


def uniform_grid(T: float, n: int = DEFAULT_GRID) -> np.ndarray:
    if n < 2:
        raise ValueError("grid needs at least 2 points")
    return np.linspace(0.0, T, n)


def _check_grid(cfg: ValidatedConfig, grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("grid must be a 1-d array with at least 2 points")
    if grid[0] != 0.0 or grid[-1] != cfg.params.T:
        raise ValueError(f"grid must run from 0 to T={cfg.params.T}")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    return grid


def solve_k(cfg: ValidatedConfig, grid) -> np.ndarray:
    grid = _check_grid(cfg, grid)
    K = k_closed(cfg, cfg.params.T - grid)
    K[-1] = 0.0
    return K


def solve_l(cfg: ValidatedConfig, K, grid) -> np.ndarray:
    grid = _check_grid(cfg, grid)
    if np.shape(K) != grid.shape:
        raise ValueError("K and grid have different lengths")
    L = l_closed(cfg, cfg.params.T - grid)
    L[-1] = 0.0
    return L


def solve_j(cfg: ValidatedConfig, K, L, grid) -> np.ndarray:
    """J on the grid: analytic drift/volatility/excess-return terms plus the
    OU correction ``int_t^T beta^2 (L^2/2 + K) ds`` by per-interval Gauss-Legendre."""
    grid = _check_grid(cfg, grid)
    if np.shape(K) != grid.shape or np.shape(L) != grid.shape:
        raise ValueError("K, L and grid have different lengths")
    p = cfg.params
    tau = p.T - grid
    J = _surplus_exponent(cfg, tau) - p.a1**2 * tau / (2 * p.foreign_var)
    beta2 = cfg.ou.beta**2
    if beta2 != 0:
        a, b = grid[:-1], grid[1:]
        half = (b - a) / 2
        nodes = (a + b)[:, None] / 2 + half[:, None] * _GL_NODES[None, :]
        s_tau = p.T - nodes
        integrand = beta2 * (0.5 * l_closed(cfg, s_tau) ** 2 + k_closed(cfg, s_tau))
        pieces = half * (integrand @ _GL_WEIGHTS)
        tail = np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]])
        J = J + tail
    J = np.asarray(J, dtype=float)
    J[-1] = 0.0
    return J


@dataclass(frozen=True, eq=False)
class CoefficientTable:
    """K, L, J sampled on ``grid``; cubic-spline interpolation in between.

    Node values are returned exactly at grid points.
    """

    grid: np.ndarray
    K: np.ndarray
    L: np.ndarray
    J: np.ndarray
    _splines: dict = field(init=False, repr=False)

    def __post_init__(self):
        splines = {name: CubicSpline(self.grid, getattr(self, name)) for name in ("K", "L", "J")}
        object.__setattr__(self, "_splines", splines)

    @property
    def T(self) -> float:
        return float(self.grid[-1])

    def at(self, name: str, t, nu: int = 0):
        t = np.asarray(t, dtype=float)
        out = self._splines[name](t, nu)
        if nu == 0:
            idx = np.clip(np.searchsorted(self.grid, t), 0, self.grid.size - 1)
            on_node = self.grid[idx] == t
            out = np.where(on_node, getattr(self, name)[idx], out)
        return float(out) if out.ndim == 0 else out

    def h(self, t, m):
        return self.at("K", t) * m**2 + self.at("L", t) * m + self.at("J", t)

    def with_values(self, **arrays) -> "CoefficientTable":
        """Copy with some of K, L, J replaced (used for fault injection)."""
        vals = {"K": self.K, "L": self.L, "J": self.J, **arrays}
        return CoefficientTable(self.grid, vals["K"], vals["L"], vals["J"])


def build_table(cfg: ValidatedConfig, n: int = DEFAULT_GRID) -> CoefficientTable:
    grid = uniform_grid(cfg.params.T, n)
    K = solve_k(cfg, grid)
    L = solve_l(cfg, K, grid)
    J = solve_j(cfg, K, L, grid)
    return CoefficientTable(grid, K, L, J)


@lru_cache(maxsize=64)
def coefficient_table(cfg: ValidatedConfig, n: int = DEFAULT_GRID) -> CoefficientTable:
    """Cached :func:`build_table`; tables are read-only once built."""
    return build_table(cfg, n)


def _check_t(cfg: ValidatedConfig, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t > cfg.params.T) or np.any(t < 0):
        raise ValueError(f"t must lie in [0, T={cfg.params.T}]")
    return t


def h_value(cfg: ValidatedConfig, t, m=None, table: CoefficientTable | None = None):
    t = _check_t(cfg, t)
    tau = cfg.params.T - t
    if cfg.kind == "gbm":
        return f_exponent(cfg, tau)
    if cfg.kind == "domestic":
        return g_exponent(cfg, tau)
    m = cfg.ou.m0 if m is None else m
    table = table if table is not None else coefficient_table(cfg)
    return table.h(t, m)


def value_function(cfg: ValidatedConfig, t, x, m=None, table: CoefficientTable | None = None):
    """Optimal expected utility of terminal surplus from state ``(t, x, m)``.

    ``m`` defaults to the configured initial deviation and is ignored outside the OU
    market. Accepts numpy arrays (broadcast).
    """
    t = _check_t(cfg, t)
    p, ut = cfg.params, cfg.utility
    h = h_value(cfg, t, m, table)
    out = ut.lam - ut.gamma / ut.theta * np.exp(-ut.theta * x * np.exp(p.r_d * (p.T - t)) + h)
    return float(out) if np.ndim(out) == 0 else out


def _excess_and_var(cfg: ValidatedConfig, m):
    p = cfg.params
    if cfg.kind == "domestic":
        return p.u_d - p.r_d, p.sigma_d**2
    if cfg.kind == "gbm":
        return p.a1, p.foreign_var
    return p.a1 + m, p.foreign_var


def optimal_strategy(cfg: ValidatedConfig, t, m=None):
    """Optimal amount held in the risky asset at time ``t`` (wealth-independent)."""
    t = _check_t(cfg, t)
    m = cfg.ou.m0 if m is None else m
    excess, var = _excess_and_var(cfg, m)
    out = excess / (cfg.utility.theta * var) * np.exp(-cfg.params.r_d * (cfg.params.T - t))
    return float(out) if np.ndim(out) == 0 else out


def _h_partials(cfg: ValidatedConfig, t, m, table):
    """``(h, h_t, h_m, h_mm)``; OU derivatives come from the spline contract."""
    p, th = cfg.params, cfg.utility.theta
    tau = p.T - t
    if cfg.kind == "ou":
        K, L, J = (table.at(n, t) for n in "KLJ")
        Kt, Lt, Jt = (table.at(n, t, 1) for n in "KLJ")
        h = K * m**2 + L * m + J
        return h, Kt * m**2 + Lt * m + Jt, 2 * K * m + L, 2 * K + 0 * m
    excess, var = _excess_and_var(cfg, m)
    h = f_exponent(cfg, tau) if cfg.kind == "gbm" else g_exponent(cfg, tau)
    dtau = -th * p.u * np.exp(p.r_d * tau) + 0.5 * th**2 * p.sigma**2 * np.exp(2 * p.r_d * tau) - excess**2 / (2 * var)
    zero = 0 * m
    return h, -dtau + zero, zero, zero


def value_partials(cfg: ValidatedConfig, t, x, m=None, table: CoefficientTable | None = None) -> dict:
    """``V, V_t, V_x, V_xx, V_m, V_mm`` of the exponential ansatz, vectorized."""
    t = _check_t(cfg, t)
    m = cfg.ou.m0 if m is None else m
    if cfg.kind == "ou" and table is None:
        table = coefficient_table(cfg)
    p, ut = cfg.params, cfg.utility
    th, disc = ut.theta, np.exp(p.r_d * (p.T - t))
    h, h_t, h_m, h_mm = _h_partials(cfg, t, m, table)
    w = -ut.gamma / th * np.exp(-th * x * disc + h)  # V - lambda
    return {
        "V": ut.lam + w,
        "V_t": w * (th * x * p.r_d * disc + h_t),
        "V_x": -w * th * disc,
        "V_xx": w * th**2 * disc**2,
        "V_m": w * h_m,
        "V_mm": w * (h_m**2 + h_mm),
    }


def hjb_residual(cfg: ValidatedConfig, t, x, m=None, table: CoefficientTable | None = None, pi=None):
    """HJB left-hand side at control ``pi`` (default: the optimal one).

    Returns ``(residual, concavity)`` where ``concavity`` is the coefficient of
    ``pi^2``; it must be negative for ``pi`` to be the unique maximizer.
    """
    m = cfg.ou.m0 if m is None else m
    d = value_partials(cfg, t, x, m, table)
    p = cfg.params
    excess, var = _excess_and_var(cfg, m)
    pi = optimal_strategy(cfg, t, m) if pi is None else pi
    res = (d["V_t"] + (pi * excess + x * p.r_d + p.u) * d["V_x"]
           + 0.5 * (p.sigma**2 + pi**2 * var) * d["V_xx"])
    if cfg.kind == "ou":
        res = res + cfg.ou.alpha * m * d["V_m"] + 0.5 * cfg.ou.beta**2 * d["V_mm"]
    return res, 0.5 * var * d["V_xx"]


def ode_residuals(cfg: ValidatedConfig, table: CoefficientTable, dense: int = 2) -> dict[str, float]:
    """Sup-norm residuals of the K, L, J equations using spline derivatives.

    Evaluated at the nodes and ``dense - 1`` interior points per interval.
    """
    g = table.grid
    frac = np.arange(dense) / dense
    ts = np.concatenate([(g[:-1, None] + np.diff(g)[:, None] * frac[None, :]).ravel(), g[-1:]])
    p, th = cfg.params, cfg.utility.theta
    alpha, beta2 = cfg.ou.alpha, cfg.ou.beta**2
    vbar, r = p.foreign_var, p.r_d
    K, L, J = (table.at(n, ts) for n in "KLJ")
    Kt, Lt, Jt = (table.at(n, ts, 1) for n in "KLJ")
    tau = p.T - ts
    rk = Kt + 2 * beta2 * K**2 + 2 * alpha * K - 1 / (2 * vbar)
    rl = Lt + (alpha + 2 * beta2 * K) * L - p.a1 / vbar
    rj = (Jt - p.u * th * np.exp(r * tau) + 0.5 * th**2 * p.sigma**2 * np.exp(2 * r * tau)
          - p.a1**2 / (2 * vbar) + 0.5 * beta2 * L**2 + beta2 * K)
    return {"K": float(np.max(np.abs(rk))), "L": float(np.max(np.abs(rl))), "J": float(np.max(np.abs(rj)))}
