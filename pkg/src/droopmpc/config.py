"""Line-oriented ``key = value`` configuration with sections.

Sections: ``[model]`` holds the microgrid parameters, ``[sim]`` the run set-up,
``[solver]`` the branch-and-bound options and ``[oracle]`` the verification
grid.  Unknown sections or keys are errors.  Floats are written with ``repr``
so an emitted file parses back to an identical configuration.
"""
import configparser
from dataclasses import dataclass, field, fields, replace
from typing import Dict, Optional, Tuple

from .model import GainMode, MgParams, ModelError
from .sim import SimConfig
from .solver.bnb import SolveOptions

_DERIVED = ("big_m_pv", "small_m_pv", "big_m_f", "small_m_f")
_SIM_KEYS = ("mode", "fixed_chi_f", "fixed_chi_b", "duration_hours", "x0", "delta_f_prev",
             "forecast_seed", "realization_seed", "world_seed", "n_scenarios", "realization",
             "pv_history", "load_history", "history_unit", "base_kw", "training_days", "pairing",
             "curtailment_reference", "record_timing")


class ConfigError(ValueError):
    """Malformed or invalid configuration."""


@dataclass
class RunConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    oracle_resolution: int = 32

    def validate(self) -> "RunConfig":
        try:
            self.sim.validate()
        except (ModelError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        if self.oracle_resolution < 1:
            raise ConfigError("oracle resolution must be at least 1")
        return self


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(text: str, like, key: str):
    t = text.strip()
    if like is None or isinstance(like, str):
        return None if t.lower() == "none" else t
    try:
        if isinstance(like, bool):
            if t.lower() not in ("true", "false"):
                raise ValueError(f"expected true or false, got {t!r}")
            return t.lower() == "true"
        if isinstance(like, int):
            return int(t)
        return float(t)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def _sim_values(sim: SimConfig) -> Dict[str, object]:
    return {
        "mode": sim.mode.name, "fixed_chi_f": float(sim.mode.chi_f),
        "fixed_chi_b": float(sim.mode.chi_b), "duration_hours": float(sim.duration_hours),
        "x0": float(sim.x0), "delta_f_prev": int(sim.delta_f_prev),
        "forecast_seed": int(sim.forecast_seed), "realization_seed": int(sim.realization_seed),
        "world_seed": int(sim.world_seed), "n_scenarios": int(sim.n_scenarios),
        "realization": sim.realization, "pv_history": sim.pv_history,
        "load_history": sim.load_history, "history_unit": sim.history_unit,
        "base_kw": float(sim.base_kw), "training_days": int(sim.training_days),
        "pairing": sim.pairing, "curtailment_reference": sim.curtailment_reference,
        "record_timing": bool(sim.record_timing),
    }


_SIM_TYPES = {"pv_history": "", "load_history": ""}


def dumps_config(cfg: RunConfig) -> str:
    p = cfg.sim.params
    auto = MgParams(**{**p.to_dict(), **{k: None for k in _DERIVED}})
    lines = ["[model]"]
    for f in fields(MgParams):
        v = getattr(p, f.name)
        if f.name in _DERIVED and v == getattr(auto, f.name):
            v = "auto"
        elif f.name == "horizon_j":
            v = int(v)
        else:
            v = float(v)
        lines.append(f"{f.name} = {_fmt(v)}")
    lines += ["", "[sim]"]
    lines += [f"{k} = {_fmt(v)}" for k, v in _sim_values(cfg.sim).items()]
    lines += ["", "[solver]"]
    for f in fields(SolveOptions):
        lines.append(f"{f.name} = {_fmt(getattr(cfg.sim.solver, f.name))}")
    lines += ["", "[oracle]", f"resolution = {cfg.oracle_resolution}", ""]
    return "\n".join(lines)


def loads_config(text: str, source: str = "<config>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                   comment_prefixes=("#", ";"), inline_comment_prefixes=("#",),
                                   default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text, source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    unknown = set(cp.sections()) - {"model", "sim", "solver", "oracle"}
    if unknown:
        raise ConfigError(f"{source}: unknown section(s) {sorted(unknown)}")
    base = RunConfig()

    def section(name, allowed) -> Dict[str, str]:
        if not cp.has_section(name):
            return {}
        items = dict(cp.items(name))
        bad = set(items) - set(allowed)
        if bad:
            raise ConfigError(f"{source}: unknown key(s) in [{name}]: {sorted(bad)}")
        return items

    model_fields = {f.name: f for f in fields(MgParams)}
    model_raw = section("model", model_fields)
    params = base.sim.params.to_dict()
    for k in _DERIVED:
        params[k] = None
    for k, text_v in model_raw.items():
        if k in _DERIVED and text_v.strip().lower() == "auto":
            params[k] = None
        elif k == "horizon_j":
            params[k] = _parse_value(text_v, 0, k)
        else:
            params[k] = _parse_value(text_v, 0.0, k)
    try:
        mg = MgParams(**params)
    except (TypeError, ModelError) as exc:
        raise ConfigError(f"{source}: {exc}") from None

    sim_raw = section("sim", _SIM_KEYS)
    sv = _sim_values(base.sim)
    for k, text_v in sim_raw.items():
        like = _SIM_TYPES.get(k, sv[k])
        sv[k] = _parse_value(text_v, like, k)
    try:
        mode = GainMode.parse(sv["mode"])
    except ModelError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    if not mode.adaptive:
        mode = GainMode(False, float(sv["fixed_chi_f"]), float(sv["fixed_chi_b"]))
    else:
        mode = GainMode(True, float(sv["fixed_chi_f"]), float(sv["fixed_chi_b"]))

    solver_fields = {f.name: f for f in fields(SolveOptions)}
    opts = {f: getattr(base.sim.solver, f) for f in solver_fields}
    for k, text_v in section("solver", solver_fields).items():
        opts[k] = _parse_value(text_v, opts[k], k)
    try:
        solver = SolveOptions(**opts)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None

    oracle_raw = section("oracle", ("resolution",))
    resolution = _parse_value(oracle_raw.get("resolution", str(base.oracle_resolution)), 0,
                              "resolution")
    sim = SimConfig(
        params=mg, mode=mode, duration_hours=sv["duration_hours"], x0=sv["x0"],
        delta_f_prev=sv["delta_f_prev"], forecast_seed=sv["forecast_seed"],
        realization_seed=sv["realization_seed"], world_seed=sv["world_seed"],
        n_scenarios=sv["n_scenarios"], realization=sv["realization"],
        pv_history=sv["pv_history"], load_history=sv["load_history"],
        history_unit=sv["history_unit"], base_kw=sv["base_kw"],
        training_days=sv["training_days"], pairing=sv["pairing"],
        curtailment_reference=sv["curtailment_reference"], solver=solver,
        record_timing=sv["record_timing"])
    return RunConfig(sim, resolution)


def load_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return loads_config(text, path)


def with_overrides(cfg: RunConfig, mode: Optional[str] = None,
                   seed: Optional[int] = None) -> RunConfig:
    """Apply ``--mode`` and ``--seed`` (all three seeds) on top of a configuration."""
    sim = cfg.sim
    if mode is not None:
        try:
            parsed = GainMode.parse(mode)
        except ModelError as exc:
            raise ConfigError(str(exc)) from None
        sim = replace(sim, mode=GainMode(parsed.adaptive, sim.mode.chi_f, sim.mode.chi_b))
    if seed is not None:
        sim = replace(sim, forecast_seed=seed, realization_seed=seed, world_seed=seed)
    return replace(cfg, sim=sim)


def config_key(cfg: RunConfig) -> Tuple:
    """Comparable view used to check that a configuration round-trips."""
    return dumps_config(cfg), cfg.sim.params, cfg.sim.mode, cfg.sim.solver


__all__ = ["ConfigError", "RunConfig", "config_key", "dumps_config", "load_config",
           "loads_config", "with_overrides"]
