"""Seasonal forecast models, scenario sampling and robust interval bounds.

Both uncertain inputs use a seasonally differenced AR model,

    d_k = y_k - y_{k-S},    d_k = phi * d_{k-1} + eps_k,    eps_k ~ N(0, sigma^2),

with ``phi = 0`` for the load.  Scenarios iterate the recursion forward from
the last observed season; the per-step bounds are the max/min over scenarios.
"""
import csv
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from typing import Optional, Tuple

import numpy as np

from .model import ForecastBounds

DEFAULT_STEP = timedelta(minutes=30)
DAY_STEPS = 48


class ForecastError(ValueError):
    """Bad history, model or forecast request."""


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled series in pu."""

    start_time: datetime
    step: timedelta
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(vals)):
            raise ForecastError("time series values must be finite")
        if self.step <= timedelta(0):
            raise ForecastError("time series step must be positive")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return self.values.shape[0]

    def time_at(self, k: int) -> datetime:
        return self.start_time + k * self.step

    def slice(self, start: int, stop: int) -> "TimeSeries":
        return TimeSeries(self.time_at(start), self.step, self.values[start:stop])


@dataclass(frozen=True)
class SeasonalModel:
    """Fitted seasonal AR model plus the observations it forecasts from.

    ``last_season`` holds the trailing ``season_length + 1`` observations:
    the season that the next values are differenced against and one extra
    sample to recover the latest difference.
    """

    season_length: int
    phi: float
    sigma: float
    last_season: np.ndarray = field(repr=False)
    constant: bool = False  # zero residual variance was fitted
    nonnegative_floor: bool = False  # keep zero seasonal levels at zero (night PV)

    def __post_init__(self):
        if not abs(self.phi) < 1.0:
            raise ForecastError(f"|phi| must be < 1, got {self.phi}")
        if self.sigma < 0:
            raise ForecastError("innovation std must be nonnegative")
        window = np.asarray(self.last_season, dtype=float).ravel()
        if window.shape[0] < self.season_length + 1:
            raise ForecastError("forecast window shorter than season_length + 1")
        object.__setattr__(self, "last_season", window[-(self.season_length + 1):])

    def condition(self, recent: np.ndarray) -> "SeasonalModel":
        """Same coefficients, forecasting from the newest ``recent`` observations."""
        recent = np.asarray(recent, dtype=float).ravel()
        if recent.shape[0] < self.season_length + 1:
            raise ForecastError("need at least season_length + 1 recent observations")
        return replace(self, last_season=recent[-(self.season_length + 1):])

    def point_forecast(self, horizon: int) -> np.ndarray:
        """Noise-free forecast, i.e. the scenario with all innovations zero."""
        return _iterate(self, np.zeros(horizon))


def _iterate(model: SeasonalModel, eps: np.ndarray) -> np.ndarray:
    S = model.season_length
    window = model.last_season
    hist = list(window[1:])  # last S observations, oldest first
    d = window[-1] - window[0]
    out = np.empty(eps.shape[0])
    for h in range(eps.shape[0]):
        ref = hist[-S]
        d = model.phi * d + eps[h]
        y = ref + d
        if model.nonnegative_floor and ref <= 0.0:
            y = 0.0
        out[h] = y
        hist.append(y)
    return out


def fit_seasonal_model(history: TimeSeries, season_length: int = DAY_STEPS, ar_order: int = 1,
                       nonnegative_floor: bool = False) -> SeasonalModel:
    """Least-squares fit of the seasonal AR(``ar_order``) model, ``ar_order`` in {0, 1}."""
    if ar_order not in (0, 1):
        raise ForecastError("ar_order must be 0 or 1")
    S = int(season_length)
    if S < 1:
        raise ForecastError("season_length must be positive")
    y = history.values
    if y.shape[0] < 3 * S:
        raise ForecastError(f"need at least {3 * S} samples of history, got {y.shape[0]}")
    d = y[S:] - y[:-S]
    phi = 0.0
    if ar_order == 1:
        den = float(d[:-1] @ d[:-1])
        if den > 0.0:
            phi = float(d[1:] @ d[:-1]) / den
        # a unit-root fit would make the recursion explode; keep it just stationary
        phi = float(np.clip(phi, -0.999, 0.999))
        resid = d[1:] - phi * d[:-1]
    else:
        resid = d
    sigma = float(np.std(resid))
    if sigma < 1e-12:
        sigma = 0.0
    return SeasonalModel(S, phi, sigma, y[-(S + 1):], constant=sigma == 0.0,
                         nonnegative_floor=nonnegative_floor)


@dataclass(frozen=True)
class ScenarioSet:
    """``n`` sampled trajectories of length ``horizon`` per uncertain input."""

    pv: np.ndarray = field(repr=False)
    demand: np.ndarray = field(repr=False)
    seed: int = 0

    def __post_init__(self):
        pv = np.atleast_2d(np.asarray(self.pv, dtype=float))
        dem = np.atleast_2d(np.asarray(self.demand, dtype=float))
        if pv.shape != dem.shape or pv.shape[0] < 1 or pv.shape[1] < 1:
            raise ForecastError("scenario arrays must share a nonempty (n, horizon) shape")
        object.__setattr__(self, "pv", pv)
        object.__setattr__(self, "demand", dem)

    @property
    def n(self) -> int:
        return self.pv.shape[0]

    @property
    def horizon(self) -> int:
        return self.pv.shape[1]


def scenario_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for one scenario, derived from ``(seed, index)`` only."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def sample_scenarios(model_pv: SeasonalModel, model_load: SeasonalModel, n: int, horizon: int,
                     seed: int, pv_max: float = 4.0) -> ScenarioSet:
    """``n`` joint PV/demand scenarios; PV clamped to ``[0, pv_max]``, demand to ``>= 0``."""
    if n < 1 or horizon < 1:
        raise ForecastError("need n >= 1 and horizon >= 1")
    pv = np.empty((n, horizon))
    dem = np.empty((n, horizon))
    for i in range(n):
        rng = scenario_rng(seed, i)
        eps = rng.standard_normal((2, horizon))
        pv[i] = _iterate(model_pv, model_pv.sigma * eps[0])
        dem[i] = _iterate(model_load, model_load.sigma * eps[1])
    np.clip(pv, 0.0, pv_max, out=pv)
    np.maximum(dem, 0.0, out=dem)
    return ScenarioSet(pv, dem, int(seed))


def bounds_from_scenarios(scenarios: ScenarioSet) -> ForecastBounds:
    """Per-step max/min over the scenarios.

    The load series is consumption-positive, which is already the internal
    demand convention, so no sign flip is needed.
    """
    return ForecastBounds(scenarios.pv.min(axis=0), scenarios.pv.max(axis=0),
                          scenarios.demand.min(axis=0), scenarios.demand.max(axis=0))


def synthetic_profiles(days: int, seed: int, step: timedelta = DEFAULT_STEP,
                       start: Optional[datetime] = None,
                       pv_peak: float = 4.0) -> Tuple[TimeSeries, TimeSeries]:
    """Synthetic PV availability and load, both in pu.

    PV is a half sine between 06:00 and 18:00 with a daily amplitude in
    ``[0.8875, 1] * pv_peak`` and slow cloud dips of at most 15%; it is exactly
    zero outside daylight.  The load is a base of 1 pu with a morning and a
    stronger evening bump plus a little white noise.
    """
    if days < 3:
        raise ForecastError("synthetic profiles need at least 3 days")
    per_day = int(round(timedelta(days=1) / step))
    if per_day * step != timedelta(days=1):
        raise ForecastError("step must divide one day")
    start = start or datetime(2020, 6, 1)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5EED]))
    n = days * per_day
    hours = (np.arange(n) % per_day) * (24.0 / per_day)
    day = np.arange(n) // per_day

    amp = pv_peak * rng.uniform(0.8875, 1.0, days)
    envelope = np.where((hours > 6.0) & (hours < 18.0), np.sin(np.pi * (hours - 6.0) / 12.0), 0.0)
    # cloud factor: smoothed noise mapped into [0.85, 1]
    raw = np.convolve(rng.standard_normal(n + 5), np.ones(6) / 6.0, mode="valid")[:n]
    cloud = 1.0 - 0.15 * (1.0 - np.exp(-np.abs(raw)))
    pv = np.clip(amp[day] * envelope * cloud, 0.0, pv_peak)

    bumps = 0.45 * np.exp(-0.5 * ((hours - 8.0) / 1.5) ** 2) \
        + 0.8 * np.exp(-0.5 * ((hours - 19.5) / 2.0) ** 2)
    load = np.maximum(1.0 + bumps + 0.03 * rng.standard_normal(n), 0.0)
    return TimeSeries(start, step, pv), TimeSeries(start, step, load)


def load_history_csv(path, base_kw: float = 10.0, unit: str = "kW",
                     kind: str = "load") -> TimeSeries:
    """Read ``timestamp,value`` rows (ISO-8601) and convert to pu.

    ``unit`` is ``"kW"`` (divided by ``base_kw``) or ``"pu"``.  ``kind`` is
    ``"pv"`` or ``"load"``; negative PV is rejected.
    """
    if unit not in ("kW", "pu"):
        raise ForecastError(f"unknown unit {unit!r}")
    if kind not in ("pv", "load"):
        raise ForecastError(f"unknown series kind {kind!r}")
    if base_kw <= 0:
        raise ForecastError("base power must be positive")
    times, vals = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["timestamp", "value"]:
            raise ForecastError(f"{path}: line 1: expected header 'timestamp,value'")
        for lineno, row in enumerate(reader, 2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ForecastError(f"{path}: line {lineno}: expected 2 fields, got {len(row)}")
            try:
                t = datetime.fromisoformat(row[0].strip())
                v = float(row[1])
            except ValueError as exc:
                raise ForecastError(f"{path}: line {lineno}: {exc}") from None
            if not math.isfinite(v):
                raise ForecastError(f"{path}: line {lineno}: non-finite value")
            if kind == "pv" and v < 0:
                raise ForecastError(f"{path}: line {lineno}: negative PV value {v}")
            times.append(t)
            vals.append(v)
    if not times:
        raise ForecastError(f"{path}: no data rows")
    step = times[1] - times[0] if len(times) > 1 else DEFAULT_STEP
    for k in range(1, len(times)):
        if times[k] - times[k - 1] != step:
            raise ForecastError(f"{path}: line {k + 2}: non-uniform step "
                                f"({times[k] - times[k - 1]} instead of {step})")
    scale = 1.0 / base_kw if unit == "kW" else 1.0
    return TimeSeries(times[0], step, np.asarray(vals) * scale)


__all__ = [
    "DAY_STEPS", "DEFAULT_STEP", "ForecastError", "ScenarioSet", "SeasonalModel", "TimeSeries",
    "bounds_from_scenarios", "fit_seasonal_model", "load_history_csv", "sample_scenarios",
    "scenario_rng", "synthetic_profiles",
]
