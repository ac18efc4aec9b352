import json
import math

import pytest

from fxinsure import (ConfigError, DomesticOnly, ForeignGBM, ForeignOU, OUParams, UtilityParams,
                      a1, config_from_dict, load_config, table_config, validate)
from fxinsure.market import TABLES, config_to_dict


def test_table1_accepted():
    cfg = table_config(1)
    assert cfg.params.T == 4 and cfg.params.sigma_f == math.sqrt(0.1)
    assert cfg.utility == UtilityParams(1.0, 1.0, 1.0)


def test_table3_accepted():
    cfg = table_config(3)
    assert (cfg.params.u_f, cfg.params.sigma_f, cfg.params.u_Q, cfg.params.sigma_Q) == (0.2, 0.3, 0.3, 0.4)


def test_theta_zero_rejected():
    with pytest.raises(ConfigError, match="theta must be > 0"):
        config_from_dict({**TABLES[1], "theta": 0.0})


@pytest.mark.parametrize("key", ["gamma", "u", "sigma", "sigma_f", "sigma_Q", "sigma_d", "T"])
def test_positive_fields_rejected_at_zero(key):
    with pytest.raises(ConfigError, match=f"{key} must be > 0"):
        config_from_dict({**TABLES[1], key: 0.0})


def test_negative_rate_rejected_but_zero_allowed():
    config_from_dict({**TABLES[1], "r_d": 0.0})
    with pytest.raises(ConfigError, match="r_d must be >= 0"):
        config_from_dict({**TABLES[1], "r_d": -0.01})


def test_nonfinite_rejected():
    with pytest.raises(ConfigError, match="alpha must be finite"):
        config_from_dict({**TABLES[1], "alpha": float("nan")})


@pytest.mark.parametrize("tid, expected", [(1, 0.4), (3, 0.4)])
def test_a1_tables(tid, expected):
    assert a1(table_config(tid)) == pytest.approx(expected, abs=1e-15)


def test_a1_zero_excess():
    cfg = table_config(1).with_params(u_f=0.1, u_Q=0.0)
    assert a1(cfg) == 0.0


def test_a1_is_exact_sum():
    p = table_config(2).params
    assert a1(table_config(2)) == p.u_f + p.u_Q - p.r_d


def test_a1_rejects_domestic():
    with pytest.raises(ConfigError):
        a1(table_config(1, "domestic"))


def test_beta_normalized_and_ou_signs_free():
    cfg = table_config(1, alpha=0.7, beta=-0.3, m0=-1.0)
    assert cfg.ou == OUParams(0.7, 0.3, -1.0)


def test_variants_and_defaults():
    p = table_config(1).params
    assert validate(ForeignGBM(p)).ou == OUParams()
    assert validate(DomesticOnly(p)).kind == "domestic"
    assert validate(ForeignOU(p)).ou == OUParams()
    assert (p.q0, p.sf0) == (1.0, 1.0)


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown"):
        config_from_dict({**TABLES[1], "rho": 0.1})


def test_json_round_trip(tmp_path):
    cfg = table_config(2, alpha=-0.2, beta=0.1, m0=0.05)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(config_to_dict(cfg)))
    assert load_config(path) == cfg
    assert load_config(path, "domestic").kind == "domestic"


def test_utility_call():
    u = UtilityParams(1.0, 2.0, 0.5)
    assert float(u(0.0)) == pytest.approx(1.0 - 4.0)
