"""Optimal investment for an insurer trading in domestic and foreign currency markets."""

from .market import (
    ConfigError,
    DomesticOnly,
    ForeignGBM,
    ForeignOU,
    MarketParams,
    OUParams,
    SimState,
    UtilityParams,
    ValidatedConfig,
    a1,
    config_from_dict,
    load_config,
    table_config,
    validate,
)

__version__ = "0.1.0"
