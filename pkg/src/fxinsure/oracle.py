"""Independent numerical checks: fixed-step RK4, adaptive Simpson, central differences.

Nothing here imports the closed-form module; the ODE right-hand sides are written
out again from the equations so the two routes can disagree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .market import ValidatedConfig

__all__ = [
    "OdeProblem",
    "OdeBlowUp",
    "QuadratureError",
    "FDReport",
    "rk4_backward",
    "adaptive_simpson",
    "finite_diff_check",
    "riccati_problem",
    "coefficient_problem",
    "solve_coefficients_rk4",
]


class OdeBlowUp(ArithmeticError):
    def __init__(self, t: float):
        super().__init__(f"non-finite ODE state at t={t}")
        self.t = t


class QuadratureError(ArithmeticError):
    pass


@dataclass(frozen=True)
class OdeProblem:
    """``y' = rhs(t, y)`` on ``[0, T]`` with a terminal value, integrated backward."""

    rhs: Callable[[float, np.ndarray], np.ndarray]
    T: float
    yT: Sequence[float]
    steps: int

    def __post_init__(self):
        if self.steps < 2:
            raise ValueError("steps must be >= 2")
        if not self.T > 0:
            raise ValueError("T must be > 0")


def rk4_backward(problem: OdeProblem) -> tuple[np.ndarray, np.ndarray]:
    """Classical RK4 from ``T`` down to 0 on a uniform grid.

    Returns ``(t, y)`` with ``t`` increasing (``t[-1] == T``) and ``y[i]`` the state
    at ``t[i]``.
    """
    n = problem.steps
    t = np.linspace(0.0, problem.T, n + 1)
    y = np.empty((n + 1, np.size(problem.yT)))
    y[-1] = problem.yT
    f = problem.rhs
    for i in range(n, 0, -1):
        h = t[i - 1] - t[i]  # negative
        ti, yi = t[i], y[i]
        k1 = f(ti, yi)
        k2 = f(ti + h / 2, yi + h / 2 * k1)
        k3 = f(ti + h / 2, yi + h / 2 * k2)
        k4 = f(ti + h, yi + h * k3)
        y[i - 1] = yi + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y[i - 1])):
            raise OdeBlowUp(float(t[i - 1]))
    return t, y


def adaptive_simpson(f: Callable[[float], float], a: float, b: float, tol: float = 1e-10,
                     max_depth: int = 50) -> float:
    """Adaptive Simpson quadrature with absolute tolerance ``tol``."""
    if a > b:
        raise ValueError("need a <= b")
    if a == b:
        return 0.0

    def simpson(fa, fm, fb, a, b):
        return (b - a) / 6 * (fa + 4 * fm + fb)

    def recurse(a, b, fa, fm, fb, whole, tol, depth):
        m = (a + b) / 2
        lm, rm = (a + m) / 2, (m + b) / 2
        flm, frm = f(lm), f(rm)
        left = simpson(fa, flm, fm, a, m)
        right = simpson(fm, frm, fb, m, b)
        delta = left + right - whole
        if abs(delta) <= 15 * tol:
            return left + right + delta / 15
        if depth >= max_depth:
            raise QuadratureError(f"tolerance {tol} not reached on [{a}, {b}] at depth {depth}")
        return (recurse(a, m, fa, flm, fm, left, tol / 2, depth + 1)
                + recurse(m, b, fm, frm, fb, right, tol / 2, depth + 1))

    fa, fm, fb = f(a), f((a + b) / 2), f(b)
    return recurse(a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 0)


@dataclass(frozen=True)
class FDReport:
    passed: bool
    analytic: float
    estimates: tuple[float, ...]
    rel_errors: tuple[float, ...]

    @property
    def best_rel_error(self) -> float:
        return min(self.rel_errors)


def finite_diff_check(f: Callable[[float], float], point: float, analytic: float, hs: Sequence[float] = (1e-2, 1e-3, 1e-4, 1e-5),
                      order: int = 1, rtol: float = 1e-5) -> FDReport:
    """Compare ``analytic`` with central differences of ``f`` at shrinking steps.

    ``order`` is 1 or 2. Passes when the best relative error over ``hs`` is within ``rtol``.
    """
    est, errs = [], []
    for h in hs:
        if order == 1:
            d = (f(point + h) - f(point - h)) / (2 * h)
        elif order == 2:
            d = (f(point + h) - 2 * f(point) + f(point - h)) / h**2
        else:
            raise ValueError("order must be 1 or 2")
        est.append(d)
        errs.append(abs(d - analytic) / max(abs(analytic), 1e-300))
    return FDReport(min(errs) <= rtol, analytic, tuple(est), tuple(errs))


def riccati_problem(cfg: ValidatedConfig, steps: int) -> OdeProblem:
    """The K equation alone."""
    alpha, beta = cfg.ou.alpha, cfg.ou.beta
    vbar = cfg.params.sigma_f**2 + cfg.params.sigma_Q**2

    def rhs(t, y):
        k = y[0]
        return np.array([1 / (2 * vbar) - 2 * beta**2 * k**2 - 2 * alpha * k])

    return OdeProblem(rhs, cfg.params.T, [0.0], steps)


def coefficient_problem(cfg: ValidatedConfig, steps: int) -> OdeProblem:
    """The joint (K, L, J) system with zero terminal values."""
    p, th = cfg.params, cfg.utility.theta
    alpha, b2 = cfg.ou.alpha, cfg.ou.beta**2
    vbar = p.sigma_f**2 + p.sigma_Q**2
    excess = p.u_f + p.u_Q - p.r_d

    def rhs(t, y):
        k, l, _ = y
        tau = p.T - t
        dk = 1 / (2 * vbar) - 2 * b2 * k * k - 2 * alpha * k
        dl = excess / vbar - (alpha + 2 * b2 * k) * l
        dj = (p.u * th * math.exp(p.r_d * tau) - 0.5 * th**2 * p.sigma**2 * math.exp(2 * p.r_d * tau)
              + excess**2 / (2 * vbar) - 0.5 * b2 * l * l - b2 * k)
        return np.array([dk, dl, dj])

    return OdeProblem(rhs, p.T, [0.0, 0.0, 0.0], steps)


def solve_coefficients_rk4(cfg: ValidatedConfig, steps: int = 4000) -> dict[str, np.ndarray]:
    t, y = rk4_backward(coefficient_problem(cfg, steps))
    return {"t": t, "K": y[:, 0], "L": y[:, 1], "J": y[:, 2]}
