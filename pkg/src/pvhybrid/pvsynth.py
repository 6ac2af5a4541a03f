"""Synthetic PV plant data: current-based power formula plus toy weather.

The power model is

    P = V_pv * N_p * ((I_sc + K_i * (T - T_ref)) * G / G_ref - I_d - I_sh)

in watts, reported in kW and clamped at zero (a plant does not export
negative power at night).  :func:`pv_power_raw` keeps the unclamped value.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np
from scipy.signal import lfilter

from .data import TimeSeriesFrame, parse_timestamp


@dataclass(frozen=True)
class PvPlantParams:
    # defaults give ~200 kW at 1000 W/m2 and 25 degC
    v_pv: float = 600.0
    n_p: float = 40.0
    i_sc: float = 8.5
    k_i: float = -0.02
    t_ref: float = 25.0
    g_ref: float = 1000.0
    i_d: float = 0.05
    i_sh: float = 0.02

    def __post_init__(self):
        vals = np.array([getattr(self, f) for f in self.__dataclass_fields__], dtype=float)
        if not np.isfinite(vals).all():
            raise ValueError("plant parameters must be finite")
        if self.g_ref <= 0 or self.n_p < 1:
            raise ValueError("need g_ref > 0 and n_p >= 1")

    @property
    def rating_kw(self) -> float:
        return self.v_pv * self.n_p * self.i_sc / 1000.0


def pv_power_raw(params: PvPlantParams, g, t):
    g = np.asarray(g, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    current = (params.i_sc + params.k_i * (t - params.t_ref)) * g / params.g_ref
    return params.v_pv * params.n_p * (current - params.i_d - params.i_sh) / 1000.0


def pv_power(params: PvPlantParams, g, t):
    """Plant output in kW for irradiance ``g`` (W/m2) and cell temperature ``t`` (degC)."""
    out = np.maximum(pv_power_raw(params, g, t), 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class WeatherSim:
    """Deliberately simple weather processes.

    Day length and clear-sky peak vary sinusoidally over the year (southern
    hemisphere: longest day near 21 December).  Clouds are a daily random
    cover level times AR(1) flicker, applied multiplicatively.
    """

    seed: int = 0
    start: str = "2017-01-01T00:00:00Z"
    solar_noon_hour: float = 12.5
    day_length_mean_h: float = 12.0
    day_length_amp_h: float = 1.7
    peak_irradiance: float = 1000.0
    peak_seasonal_amp: float = 150.0
    cloud_amplitude: float = 0.6
    cloud_ar: float = 0.97
    temp_mean: float = 21.0
    temp_seasonal_amp: float = 8.0
    temp_daily_amp: float = 7.0
    temp_peak_hour: float = 15.0
    temp_noise: float = 1.0
    humidity_mean: float = 35.0
    wind_mean: float = 3.5
    power_noise_kw: float = 1.0


def _ar1(rng, n, phi, sigma=1.0):
    e = rng.normal(0.0, sigma * np.sqrt(1 - phi * phi), size=n)
    return lfilter([1.0], [1.0, -phi], e)


def _seasonal(day_of_year):
    # 1 at the southern summer solstice (day ~355), -1 six months later
    return np.cos(2 * np.pi * (day_of_year - 355) / 365.0)


def generate(
    sim: WeatherSim = WeatherSim(),
    params: PvPlantParams = PvPlantParams(),
    days: int = 60,
    step: int = 300,
) -> TimeSeriesFrame:
    if days < 1:
        raise ValueError("days must be positive")
    if step <= 0 or 86400 % step:
        raise ValueError(f"step {step} must divide 86400")
    rng = np.random.default_rng(sim.seed)
    per_day = 86400 // step
    n = days * per_day
    t0 = parse_timestamp(sim.start)
    ts = t0 + step * np.arange(n, dtype=np.int64)
    day_idx = np.arange(n) // per_day
    hour = ((ts % 86400) / 3600.0).astype(np.float64)
    doy = ((ts - t0) // 86400 + _day_of_year(t0)) % 365
    season = _seasonal(doy)

    day_len = sim.day_length_mean_h + sim.day_length_amp_h * season
    sunrise = sim.solar_noon_hour - day_len / 2
    phase = (hour - sunrise) / day_len
    daylight = (phase > 0) & (phase < 1)
    peak = sim.peak_irradiance + sim.peak_seasonal_amp * season
    clear = np.where(daylight, peak * np.sin(np.pi * np.clip(phase, 0, 1)), 0.0)

    cover = rng.beta(0.6, 1.6, size=days)[day_idx]
    flicker = np.abs(_ar1(rng, n, sim.cloud_ar))
    cloud = np.clip(1.0 - sim.cloud_amplitude * cover * (0.5 + flicker), 0.0, 1.0)
    irradiance = np.maximum(clear * cloud, 0.0)

    daily = np.cos(2 * np.pi * (hour - sim.temp_peak_hour) / 24.0)
    temperature = (
        sim.temp_mean
        + sim.temp_seasonal_amp * season
        + sim.temp_daily_amp * daily
        + sim.temp_noise * _ar1(rng, n, 0.99)
    )
    humidity = np.clip(
        sim.humidity_mean - 12.0 * daily - 10.0 * season + 8.0 * _ar1(rng, n, 0.995) + 15 * cover,
        2.0,
        100.0,
    )
    wind_speed = np.abs(sim.wind_mean + 1.5 * _ar1(rng, n, 0.98) + 0.8 * daily)
    wind_direction = np.mod(180.0 + 90.0 * _ar1(rng, n, 0.995), 360.0)

    power = pv_power(params, irradiance, temperature)
    noise = rng.normal(0.0, 1.0, size=n) * sim.power_noise_kw
    power = np.maximum(power + noise, 0.0)

    return TimeSeriesFrame(
        ts,
        {
            "irradiance": irradiance,
            "temperature": temperature,
            "humidity": humidity,
            "wind_speed": wind_speed,
            "wind_direction": wind_direction,
            "pv_power": power,
        },
        step,
    )


def _day_of_year(t: int) -> int:
    """0-based day of year of epoch second ``t`` (UTC)."""
    return datetime.fromtimestamp(int(t), tz=timezone.utc).timetuple().tm_yday - 1
