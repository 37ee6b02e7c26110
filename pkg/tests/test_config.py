from dataclasses import replace

import pytest

from droopmpc.config import (ConfigError, RunConfig, config_key, dumps_config, loads_config,
                             with_overrides)
from droopmpc.model import GainMode, MgParams
from droopmpc.solver import SolveOptions


def test_defaults_round_trip():
    cfg = RunConfig()
    text = dumps_config(cfg)
    back = loads_config(text)
    assert config_key(back) == config_key(cfg)
    assert dumps_config(back) == text
    assert "big_m_pv = auto" in text


def test_modified_config_round_trip():
    sim = replace(RunConfig().sim, params=MgParams(gamma=0.35, horizon_j=4, big_m_pv=5.0),
                  mode=GainMode(False, 0.7, 0.4), duration_hours=6.0, forecast_seed=3,
                  n_scenarios=17, realization="worst_case_low", record_timing=True,
                  solver=SolveOptions(max_nodes=77, rel_gap=1e-5, worker_count=2))
    cfg = RunConfig(sim, oracle_resolution=12)
    back = loads_config(dumps_config(cfg))
    assert config_key(back) == config_key(cfg)
    assert back.sim.params.big_m_pv == 5.0
    assert back.sim.mode == GainMode(False, 0.7, 0.4)
    assert back.oracle_resolution == 12


def test_partial_file_uses_defaults():
    cfg = loads_config("[model]\ngamma = 0.5\n[sim]\nmode = fixed  # baseline gains\n")
    assert cfg.sim.params.gamma == 0.5
    assert cfg.sim.params.horizon_j == 6
    assert not cfg.sim.mode.adaptive and cfg.sim.mode.chi_f == 0.5


@pytest.mark.parametrize("text", [
    "[modle]\ngamma = 0.5\n",
    "[model]\ngama = 0.5\n",
    "[model]\ngamma = fast\n",
    "[sim]\nrecord_timing = maybe\n",
    "[sim]\nmode = sometimes\n",
    "[solver]\nworker_count = 0\n",
    "gamma = 0.5\n",
])
def test_bad_files(text):
    with pytest.raises(ConfigError):
        loads_config(text)


def test_validation_catches_model_limits():
    cfg = loads_config("[model]\ngamma = 1.5\n")
    with pytest.raises(ConfigError):
        cfg.validate()


def test_overrides():
    cfg = with_overrides(RunConfig(), "fixed", 42)
    assert not cfg.sim.mode.adaptive
    assert cfg.sim.forecast_seed == cfg.sim.realization_seed == cfg.sim.world_seed == 42
    assert with_overrides(cfg, "adaptive").sim.mode.adaptive
    with pytest.raises(ConfigError):
        with_overrides(cfg, "sometimes")
