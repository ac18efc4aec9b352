"""Seeded Monte Carlo simulation of the controlled surplus.

Path ``i`` draws its noise from a Philox4x64 generator keyed by ``seed + 2**64 * i``
(counter starting at zero), as a ``(steps, 4)`` standard-normal array in row-major
order. Column 0 drives the surplus, 1 the foreign asset (the domestic risky asset in
the domestic-only market), 2 the exchange rate and 3 the OU deviation. A path is a
pure function of ``(seed, i)``.

Paths are processed in fixed blocks of ``BLOCK`` consecutive indices, vectorized
within a block. Workers only change which process handles a block, so results are
bit-identical for any worker count.

Per step of length ``dt`` the surplus update integrates ``r_d X`` exactly with the
control and ``m`` frozen at the left endpoint::

    X <- X e^{r dt} + (pi*excess + u) (e^{r dt} - 1)/r
           + sqrt((e^{2 r dt} - 1)/(2r)) (sigma z0 + pi sigma_f z1 + pi sigma_Q z2)

The OU deviation uses its exact Gaussian transition; prices are log-Euler.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .closed_form import value_function
from .market import SimState, ValidatedConfig

__all__ = [
    "Strategy",
    "SimConfig",
    "SimResult",
    "PathBlowUp",
    "simulate_path",
    "simulate_paths",
    "terminal_states",
    "estimate_utility",
    "strategy_sweep",
    "BLOCK",
]

BLOCK = 2048


class PathBlowUp(ArithmeticError):
    def __init__(self, path: int, step: int):
        super().__init__(f"non-finite state on path {path} at step {step}")
        self.path, self.step = path, step


@dataclass(frozen=True)
class Strategy:
    """``optimal``, ``scaled`` (factor * optimal), ``constant`` (fixed amount) or ``zero``."""

    kind: str = "optimal"
    value: float = 1.0

    def __post_init__(self):
        if self.kind not in ("optimal", "scaled", "constant", "zero"):
            raise ValueError(f"unknown strategy kind {self.kind!r}")
        if not math.isfinite(self.value):
            raise ValueError("strategy value must be finite")

    @classmethod
    def optimal(cls) -> "Strategy":
        return cls("optimal")

    @classmethod
    def scaled(cls, factor: float) -> "Strategy":
        return cls("scaled", float(factor))

    @classmethod
    def constant(cls, amount: float) -> "Strategy":
        return cls("constant", float(amount))

    @classmethod
    def zero(cls) -> "Strategy":
        return cls("zero", 0.0)

    @classmethod
    def parse(cls, text: str) -> "Strategy":
        """Parse ``optimal``, ``zero``, ``scaled:<f>`` or ``constant:<v>``."""
        name, _, arg = text.partition(":")
        if name in ("optimal", "zero") and not arg:
            return cls.optimal() if name == "optimal" else cls.zero()
        if name in ("scaled", "constant") and arg:
            try:
                v = float(arg)
            except ValueError:
                raise ValueError(f"bad strategy value in {text!r}") from None
            return cls(name, v)
        raise ValueError(f"cannot parse strategy {text!r}")

    def __str__(self) -> str:
        if self.kind in ("optimal", "zero"):
            return self.kind
        return f"{self.kind}:{self.value!r}"


@dataclass(frozen=True)
class SimConfig:
    paths: int
    steps: int
    seed: int = 0
    strategy: Strategy = field(default_factory=Strategy)

    def __post_init__(self):
        if self.paths < 1:
            raise ValueError("paths must be >= 1")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class SimResult:
    estimate: float
    std_error: float
    paths: int
    steps: int
    seed: int
    strategy: str
    market: str

    def to_dict(self) -> dict:
        return {"market": self.market, "strategy": self.strategy, "estimate": self.estimate,
                "std_error": self.std_error, "paths": self.paths, "steps": self.steps, "seed": self.seed}


def _path_noise(seed: int, path: int, steps: int, out: np.ndarray | None = None) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(key=seed + (path << 64)))
    if out is None:
        return rng.standard_normal((steps, 4))
    return rng.standard_normal(out=out)


def _simulate_block(cfg: ValidatedConfig, steps: int, seed: int, path_ids: Sequence[int],
                    strategies: Sequence[Strategy], record: bool = False):
    """Simulate ``path_ids`` under every strategy with shared noise.

    Returns terminal ``X`` of shape ``(len(strategies), n)``, terminal ``(m, Q, Sf)``
    and, when ``record`` is set, full trajectories.
    """
    p, th = cfg.params, cfg.utility.theta
    alpha, beta = cfg.ou.alpha, cfg.ou.beta
    n = len(path_ids)
    z = np.empty((n, steps, 4))
    for j, i in enumerate(path_ids):
        _path_noise(seed, int(i), steps, out=z[j])
    z = np.ascontiguousarray(z.transpose(1, 2, 0))

    dt = p.T / steps
    r = p.r_d
    growth = math.exp(r * dt)
    phi = math.expm1(r * dt) / r if r != 0 else dt
    vol = math.sqrt(math.expm1(2 * r * dt) / (2 * r)) if r != 0 else math.sqrt(dt)
    if alpha != 0:
        m_decay = math.exp(alpha * dt)
        m_vol = beta * math.sqrt(math.expm1(2 * alpha * dt) / (2 * alpha))
    else:
        m_decay, m_vol = 1.0, beta * math.sqrt(dt)
    sq_dt = math.sqrt(dt)

    domestic = cfg.kind == "domestic"
    if domestic:
        base_excess, var = p.u_d - p.r_d, p.sigma_d**2
        vol_a, vol_b = p.sigma_d, 0.0
    else:
        base_excess, var = p.a1, p.foreign_var
        vol_a, vol_b = p.sigma_f, p.sigma_Q
    uses_m = cfg.kind == "ou"

    S = len(strategies)
    X = np.full((S, n), float(p.x0))
    m = np.full(n, float(cfg.ou.m0))
    logQ = np.full(n, math.log(p.q0))
    logS = np.full(n, math.log(p.sf0))
    # pi = factor * pi_star + const for every strategy kind
    factors = np.array([{"optimal": 1.0, "scaled": s.value}.get(s.kind, 0.0) for s in strategies])[:, None]
    consts = np.array([s.value if s.kind == "constant" else 0.0 for s in strategies])[:, None]

    traj = None
    if record:
        traj = np.empty((steps + 1, 3 + S, n))
        traj[0, :S], traj[0, S], traj[0, S + 1], traj[0, S + 2] = X, m, np.exp(logQ), np.exp(logS)

    q_drift = (p.u_Q - 0.5 * p.sigma_Q**2) * dt
    s_drift = (p.u_f - 0.5 * p.sigma_f**2) * dt
    for k in range(steps):
        zk = z[k]
        excess = base_excess + m if uses_m else base_excess
        disc = math.exp(-r * (p.T - k * dt))
        pi = factors * (excess * (disc / (th * var))) + consts
        noise = p.sigma * zk[0] + pi * (vol_a * zk[1] + vol_b * zk[2])
        X = X * growth + (pi * excess + p.u) * phi + vol * noise
        logQ = logQ + (q_drift + m * dt) + p.sigma_Q * sq_dt * zk[2]
        logS = logS + s_drift + p.sigma_f * sq_dt * zk[1]
        m = m * m_decay + m_vol * zk[3]
        if record:
            traj[k + 1, :S], traj[k + 1, S], traj[k + 1, S + 1], traj[k + 1, S + 2] = X, m, np.exp(logQ), np.exp(logS)

    bad = ~np.isfinite(X).all(axis=0) | ~np.isfinite(m) | ~np.isfinite(logQ) | ~np.isfinite(logS)
    if bad.any():
        j = int(np.argmax(bad))
        if not record:
            # rerun the offending path with recording; that call raises with the step
            _simulate_block(cfg, steps, seed, [path_ids[j]], strategies, record=True)
        tr = traj[:, :, j]
        first = int(np.argmax(~np.isfinite(tr).all(axis=1)))
        raise PathBlowUp(int(path_ids[j]), first)
    return X, (m, np.exp(logQ), np.exp(logS)), traj


def _run_block(args):
    cfg, steps, seed, lo, hi, strategies = args
    X, _, _ = _simulate_block(cfg, steps, seed, range(lo, hi), strategies)
    return lo, X


def _terminal_wealth(cfg: ValidatedConfig, sim: SimConfig, strategies: Sequence[Strategy], workers: int = 1) -> np.ndarray:
    jobs = [(cfg, sim.steps, sim.seed, lo, min(lo + BLOCK, sim.paths), tuple(strategies))
            for lo in range(0, sim.paths, BLOCK)]
    out = np.empty((len(strategies), sim.paths))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_block, jobs))
    else:
        results = [_run_block(j) for j in jobs]
    for lo, X in results:
        out[:, lo:lo + X.shape[1]] = X
    return out


def _summarize(utils: np.ndarray) -> tuple[float, float]:
    n = utils.size
    mean = math.fsum(utils) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((utils - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


def simulate_path(cfg: ValidatedConfig, sim: SimConfig, path_index: int) -> SimState:
    """Terminal state of one path under ``sim.strategy``."""
    X, (m, Q, Sf), _ = _simulate_block(cfg, sim.steps, sim.seed, [path_index], [sim.strategy])
    return SimState(cfg.params.T, float(X[0, 0]), float(m[0]), float(Q[0]), float(Sf[0]))


def simulate_paths(cfg: ValidatedConfig, sim: SimConfig, path_ids: Sequence[int]) -> dict[str, np.ndarray]:
    """Full trajectories ``t, X, m, Q, Sf`` (arrays of shape ``(len(path_ids), steps+1)``)."""
    _, _, traj = _simulate_block(cfg, sim.steps, sim.seed, list(path_ids), [sim.strategy], record=True)
    t = np.arange(sim.steps + 1) * (cfg.params.T / sim.steps)
    t[-1] = cfg.params.T
    return {"t": t, "X": traj[:, 0].T, "m": traj[:, 1].T, "Q": traj[:, 2].T, "Sf": traj[:, 3].T}


def terminal_states(cfg: ValidatedConfig, sim: SimConfig, path_ids: Sequence[int] | None = None) -> dict[str, np.ndarray]:
    """Terminal ``X, m, Q, Sf`` for many paths (vectorized, blockwise)."""
    ids = list(range(sim.paths)) if path_ids is None else list(path_ids)
    out = {k: np.empty(len(ids)) for k in ("X", "m", "Q", "Sf")}
    for lo in range(0, len(ids), BLOCK):
        chunk = ids[lo:lo + BLOCK]
        X, (m, Q, Sf), _ = _simulate_block(cfg, sim.steps, sim.seed, chunk, [sim.strategy])
        for key, arr in zip(("X", "m", "Q", "Sf"), (X[0], m, Q, Sf)):
            out[key][lo:lo + len(chunk)] = arr
    return out


def estimate_utility(cfg: ValidatedConfig, sim: SimConfig, workers: int = 1) -> SimResult:
    """Mean and standard error of the terminal utility over ``sim.paths`` paths."""
    X = _terminal_wealth(cfg, sim, [sim.strategy], workers)[0]
    est, se = _summarize(cfg.utility(X))
    return SimResult(est, se, sim.paths, sim.steps, sim.seed, str(sim.strategy), cfg.kind)


def strategy_sweep(cfg: ValidatedConfig, sim: SimConfig, factors: Sequence[float], workers: int = 1) -> list[SimResult]:
    """One estimate per ``scaled:<factor>`` strategy, all on the same noise."""
    if len(factors) == 0:
        raise ValueError("factors must be nonempty")
    strategies = [Strategy.scaled(f) for f in factors]
    X = _terminal_wealth(cfg, sim, strategies, workers)
    results = []
    for s, row in zip(strategies, X):
        est, se = _summarize(cfg.utility(row))
        results.append(SimResult(est, se, sim.paths, sim.steps, sim.seed, str(s), cfg.kind))
    return results


def analytic_value(cfg: ValidatedConfig) -> float:
    """Closed-form value at the initial state, for side-by-side reporting."""
    return value_function(cfg, 0.0, cfg.params.x0, cfg.ou.m0)
