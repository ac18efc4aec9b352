"""Market, exchange-rate and utility parameters for the two-currency insurer.

Everything downstream takes a :class:`ValidatedConfig`; :func:`validate` is the
only way to build one, so the math modules never see an unchecked parameter set.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Union

import numpy as np

__all__ = [
    "ConfigError",
    "MarketParams",
    "OUParams",
    "UtilityParams",
    "ForeignOU",
    "ForeignGBM",
    "DomesticOnly",
    "MarketConfig",
    "ValidatedConfig",
    "SimState",
    "validate",
    "a1",
    "load_config",
    "config_from_dict",
    "table_config",
    "TABLES",
    "MARKETS",
]


class ConfigError(ValueError):
    """A parameter set violated one of the model's invariants."""


@dataclass(frozen=True)
class MarketParams:
    r_d: float
    u: float
    sigma: float
    u_f: float
    sigma_f: float
    u_Q: float
    sigma_Q: float
    u_d: float
    sigma_d: float
    T: float
    x0: float
    q0: float = 1.0
    sf0: float = 1.0

    @property
    def a1(self) -> float:
        """Excess return of the foreign asset in domestic currency."""
        return self.u_f + self.u_Q - self.r_d

    @property
    def foreign_var(self) -> float:
        """Total instantaneous variance of the domestic value of the foreign asset."""
        return self.sigma_f**2 + self.sigma_Q**2


@dataclass(frozen=True)
class OUParams:
    alpha: float = 0.0
    beta: float = 0.0
    m0: float = 0.0


@dataclass(frozen=True)
class UtilityParams:
    lam: float = 1.0
    gamma: float = 1.0
    theta: float = 1.0

    def __call__(self, x):
        return self.lam - self.gamma / self.theta * np.exp(-self.theta * np.asarray(x, dtype=float))


@dataclass(frozen=True)
class ForeignOU:
    params: MarketParams
    ou: OUParams = field(default_factory=OUParams)
    kind = "ou"


@dataclass(frozen=True)
class ForeignGBM:
    params: MarketParams
    kind = "gbm"

    @property
    def ou(self) -> OUParams:
        return OUParams()


@dataclass(frozen=True)
class DomesticOnly:
    params: MarketParams
    kind = "domestic"

    @property
    def ou(self) -> OUParams:
        return OUParams()


MarketConfig = Union[ForeignOU, ForeignGBM, DomesticOnly]
MARKETS = ("ou", "gbm", "domestic")


@dataclass(frozen=True)
class ValidatedConfig:
    """A market variant plus utility that passed :func:`validate`.

    Do not construct directly.
    """

    market: MarketConfig
    utility: UtilityParams

    @property
    def params(self) -> MarketParams:
        return self.market.params

    @property
    def ou(self) -> OUParams:
        return self.market.ou

    @property
    def kind(self) -> str:
        return self.market.kind

    def as_market(self, kind: str, ou: OUParams | None = None) -> "ValidatedConfig":
        """Same parameters, different market variant.

        The OU parameters carry over to ``"ou"`` unless ``ou`` is given.
        """
        if kind == "ou":
            market = ForeignOU(self.params, ou if ou is not None else self.ou)
        elif kind == "gbm":
            market = ForeignGBM(self.params)
        elif kind == "domestic":
            market = DomesticOnly(self.params)
        else:
            raise ConfigError(f"unknown market {kind!r}; expected one of {MARKETS}")
        return validate(market, self.utility)

    def with_params(self, **changes) -> "ValidatedConfig":
        """Re-validated copy with market, OU or utility fields replaced by name."""
        p_keys = set(MarketParams.__dataclass_fields__)
        o_keys = set(OUParams.__dataclass_fields__)
        u_keys = set(UtilityParams.__dataclass_fields__)
        unknown = set(changes) - p_keys - o_keys - u_keys
        if unknown:
            raise ConfigError(f"unknown parameter(s): {sorted(unknown)}")
        params = replace(self.params, **{k: v for k, v in changes.items() if k in p_keys})
        ou = replace(self.ou, **{k: v for k, v in changes.items() if k in o_keys})
        utility = replace(self.utility, **{k: v for k, v in changes.items() if k in u_keys})
        if self.kind == "ou":
            market: MarketConfig = ForeignOU(params, ou)
        else:
            market = type(self.market)(params)
        return validate(market, utility)


@dataclass(frozen=True)
class SimState:
    """Simulated state at one time point; the domestic price of the foreign asset is ``Q * Sf``."""

    t: float
    X: float
    m: float
    Q: float
    Sf: float

    @property
    def g(self) -> float:
        return self.Q * self.Sf


def _check(name: str, value: float, cond: str) -> None:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"{name} must be a real number")
    if not math.isfinite(value):
        raise ConfigError(f"{name} must be finite")
    if cond == ">0" and not value > 0:
        raise ConfigError(f"{name} must be > 0")
    if cond == ">=0" and not value >= 0:
        raise ConfigError(f"{name} must be >= 0")


_POSITIVE = ("u", "sigma", "sigma_f", "sigma_Q", "sigma_d", "T", "q0", "sf0")


def validate(market: MarketConfig, utility: UtilityParams | None = None) -> ValidatedConfig:
    """Check every invariant and return the validated wrapper.

    Raises :class:`ConfigError` naming the first violated invariant. ``beta`` is
    normalized to ``|beta|``; only its square enters the model.
    """
    if not isinstance(market, (ForeignOU, ForeignGBM, DomesticOnly)):
        raise ConfigError(f"unsupported market configuration {type(market).__name__}")
    utility = utility if utility is not None else UtilityParams()
    p = market.params
    for name in ("r_d", "u", "sigma", "u_f", "sigma_f", "u_Q", "sigma_Q", "u_d", "sigma_d", "T", "x0", "q0", "sf0"):
        value = getattr(p, name)
        cond = ">0" if name in _POSITIVE else (">=0" if name == "r_d" else "")
        _check(name, value, cond)
    _check("lambda", utility.lam, "")
    _check("gamma", utility.gamma, ">0")
    _check("theta", utility.theta, ">0")
    if isinstance(market, ForeignOU):
        for name in ("alpha", "beta", "m0"):
            _check(name, getattr(market.ou, name), "")
        if market.ou.beta < 0:
            market = ForeignOU(p, replace(market.ou, beta=-market.ou.beta))
    return ValidatedConfig(market, utility)


def a1(cfg: ValidatedConfig) -> float:
    """``u_f + u_Q - r_d`` for a foreign-market configuration."""
    if cfg.kind == "domestic":
        raise ConfigError("a1 is defined only for foreign-market configurations")
    return cfg.params.a1


# Parameter sets of the numerical section. Volatilities given there as square roots
# are stored as such.
TABLES: dict[int, dict[str, float]] = {
    1: dict(T=4, r_d=0.1, **{"lambda": 1.0}, theta=1.0, gamma=1.0, u=0.4, sigma=0.1,
            u_f=0.3, sigma_f=math.sqrt(0.1), u_Q=0.2, sigma_Q=math.sqrt(0.3), x0=2.0,
            u_d=0.3, sigma_d=math.sqrt(0.2)),
    2: dict(T=4, r_d=0.1, **{"lambda": 1.0}, theta=1.0, gamma=1.0, u=0.4, sigma=0.1,
            u_f=0.3, sigma_f=0.2, u_Q=0.2, sigma_Q=math.sqrt(0.12), x0=2.0,
            u_d=0.3, sigma_d=0.2),
    3: dict(T=4, r_d=0.1, **{"lambda": 1.0}, theta=1.0, gamma=1.0, u=0.4, sigma=0.1,
            u_f=0.2, sigma_f=0.3, u_Q=0.3, sigma_Q=0.4, x0=2.0,
            u_d=0.3, sigma_d=0.4),
}

CONFIG_KEYS = ("T", "r_d", "lambda", "gamma", "theta", "u", "sigma", "u_f", "sigma_f",
               "u_Q", "sigma_Q", "u_d", "sigma_d", "x0", "alpha", "beta", "m0", "q0", "sf0")
_DEFAULTS = {"alpha": 0.0, "beta": 0.0, "m0": 0.0, "q0": 1.0, "sf0": 1.0}


def config_from_dict(data: dict, market: str = "ou") -> ValidatedConfig:
    """Build a validated config from the flat JSON key set."""
    unknown = set(data) - set(CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
    merged = {**_DEFAULTS, **data}
    missing = [k for k in CONFIG_KEYS if k not in merged]
    if missing:
        raise ConfigError(f"missing config key(s): {missing}")
    values = {}
    for k in CONFIG_KEYS:
        v = merged[k]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{k} must be a real number")
        values[k] = float(v)
    params = MarketParams(**{k: values[k] for k in MarketParams.__dataclass_fields__})
    ou = OUParams(values["alpha"], values["beta"], values["m0"])
    utility = UtilityParams(values["lambda"], values["gamma"], values["theta"])
    base = validate(ForeignOU(params, ou), utility)
    return base if market == "ou" else base.as_market(market)


def config_to_dict(cfg: ValidatedConfig) -> dict[str, float]:
    out = {k: v for k, v in asdict(cfg.params).items()}
    out.update(asdict(cfg.ou))
    out["lambda"] = cfg.utility.lam
    out["gamma"] = cfg.utility.gamma
    out["theta"] = cfg.utility.theta
    return {k: out[k] for k in CONFIG_KEYS}


def load_config(path: str | Path, market: str = "ou") -> ValidatedConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a flat JSON object")
    return config_from_dict(data, market)


def table_config(table_id: int, market: str = "ou", **ou) -> ValidatedConfig:
    """Parameter set ``table_id`` (1, 2 or 3); OU fields default to zero."""
    if table_id not in TABLES:
        raise ConfigError(f"table must be one of {sorted(TABLES)}")
    return config_from_dict({**TABLES[table_id], **ou}, market)
