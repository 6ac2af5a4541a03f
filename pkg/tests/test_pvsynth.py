import time

import numpy as np
import pytest

from pvhybrid import pvsynth
from pvhybrid.pvsynth import PvPlantParams, WeatherSim

HAND = dict(v_pv=30.0, n_p=100.0, i_sc=8.0, k_i=0.0, t_ref=25.0, g_ref=1000.0, i_d=0.0, i_sh=0.0)


def test_hand_examples():
    p = PvPlantParams(**HAND)
    assert pvsynth.pv_power(p, 0.0, 25.0) == 0.0
    assert abs(pvsynth.pv_power(p, 1000.0, 25.0) - 24.0) < 1e-12
    hot = PvPlantParams(**{**HAND, "k_i": -0.005})
    assert abs(pvsynth.pv_power(hot, 1000.0, 45.0) - 23.7) < 1e-12


def test_night_raw_is_negative_but_clamped():
    p = PvPlantParams()
    assert pvsynth.pv_power_raw(p, 0.0, 20.0) < 0
    assert pvsynth.pv_power(p, 0.0, 20.0) == 0.0


def test_monotone_in_irradiance():
    g = np.linspace(0, 1200, 50)
    out = pvsynth.pv_power(PvPlantParams(), g, 30.0)
    assert np.all(np.diff(out) >= 0)


def test_one_day_shape():
    f = pvsynth.generate(WeatherSim(seed=1), days=1)
    assert len(f) == 288
    hour = (f.timestamps % 86400) / 3600
    night = (hour < 4) | (hour > 22)
    assert np.all(f["irradiance"][night] == 0)
    assert np.all(f["pv_power"][night] <= 6 * WeatherSim().power_noise_kw)
    assert np.all(f["pv_power"] >= 0)
    assert f["pv_power"].max() > 50


def test_noise_free_power_follows_formula():
    sim = WeatherSim(seed=3, power_noise_kw=0.0)
    f = pvsynth.generate(sim, days=2)
    expect = pvsynth.pv_power(PvPlantParams(), f["irradiance"], f["temperature"])
    assert np.array_equal(f["pv_power"], expect)


def test_deterministic():
    a = pvsynth.generate(WeatherSim(seed=5), days=3)
    b = pvsynth.generate(WeatherSim(seed=5), days=3)
    assert a.equals(b)


def test_bad_step():
    with pytest.raises(ValueError):
        pvsynth.generate(days=1, step=7)


def test_two_years_is_fast():
    t0 = time.perf_counter()
    f = pvsynth.generate(WeatherSim(seed=0), days=730)
    assert len(f) == 730 * 288
    assert time.perf_counter() - t0 < 5
