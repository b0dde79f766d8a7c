import math

import numpy as np
import pytest

from messrl.grid import (DEFAULT_PROFILES, MicrogridParams, MicrogridState,
                         dg_feasible_range, restore, sample_load, tan_phi)


class FixedNormal:
    """rng stub returning a fixed relative error draw."""

    def __init__(self, value):
        self.value = value

    def normal(self, mean, std):
        return self.value * (std / std)  # keep the signature honest


def mg(**overrides):
    base = dict(p_dg_max=1000.0, q_dg_max=800.0, e_dg_max=20000.0,
                e_dg_min=2000.0, power_factor=0.9, interruption_cost=10.0,
                gen_cost=0.5, load_type="commercial", peak_load=3000.0,
                profile=tuple(DEFAULT_PROFILES["commercial"]), sigma_err=0.05)
    base.update(overrides)
    return MicrogridParams(**base)


# ----------------------------------------------------------------------
# load sampling


def test_sample_load_noise_free_is_forecast():
    p = mg(sigma_err=0.0)
    for t in range(24):
        assert sample_load(p, t, None) == p.peak_load * p.profile[t]


def test_sample_load_arithmetic():
    p = mg(peak_load=3000.0, profile=(0.8,) * 24)
    # 3000 * 0.8 * (1 - 0.05) = 2280
    assert sample_load(p, 5, FixedNormal(-0.05)) == pytest.approx(2280.0)


def test_sample_load_clips_both_sides():
    p = mg(profile=(0.5,) * 24)
    assert sample_load(p, 0, FixedNormal(-3.0)) == 0.0
    assert sample_load(p, 0, FixedNormal(+3.0)) == p.peak_load


def test_sample_load_deterministic_per_seed():
    p = mg()
    a = [sample_load(p, t, np.random.default_rng(9)) for t in range(24)]
    b = [sample_load(p, t, np.random.default_rng(9)) for t in range(24)]
    assert a == b


def test_sample_load_rejects_bad_hour():
    with pytest.raises(ValueError):
        sample_load(mg(), 24, np.random.default_rng(0))


# ----------------------------------------------------------------------
# generator feasibility


def test_dg_range_at_reserve_is_zero():
    p = mg()
    assert dg_feasible_range(p, MicrogridState(e_dg=2000.0, p_load=0.0),
                             1.0) == (0.0, 0.0)


def test_dg_range_capacity_limited():
    # Table-style ratings: 1 MW, 20 MWh, 2 MWh reserve
    p = mg(p_dg_max=1000.0, e_dg_max=20000.0, e_dg_min=2000.0)
    lo, hi = dg_feasible_range(p, MicrogridState(e_dg=20000.0, p_load=0.0),
                               1.0)
    assert (lo, hi) == (0.0, 1000.0)


def test_dg_range_energy_limited():
    p = mg(p_dg_max=1000.0, e_dg_min=2000.0)
    lo, hi = dg_feasible_range(p, MicrogridState(e_dg=2500.0, p_load=0.0),
                               1.0)
    assert (lo, hi) == (0.0, 500.0)


# ----------------------------------------------------------------------
# restoration


def test_restore_blackout():
    assert restore(mg(), 0.0, 2500.0) == (0.0, 0.0, 0.0, 0.0)


def test_restore_reactive_coupling():
    p = mg(q_dg_max=5000.0)
    p_r, q_r, spill, q_def = restore(p, 1000.0, 3000.0)
    assert p_r == 1000.0
    assert q_r == pytest.approx(1000.0 * math.tan(math.acos(0.9)))
    assert q_r == pytest.approx(484.3221, abs=1e-3)
    assert spill == 0.0 and q_def == 0.0


def test_restore_capped_by_reactive_capacity():
    p = mg(q_dg_max=800.0, power_factor=0.9)
    cap = 800.0 / math.tan(math.acos(0.9))
    p_r, q_r, spill, q_def = restore(p, 2500.0, 3000.0)
    assert p_r == pytest.approx(cap) and cap == pytest.approx(1651.79, abs=1e-2)
    assert spill == pytest.approx(2500.0 - cap)
    assert q_r <= p.q_dg_max + 1e-9 and q_def == 0.0


def test_restore_invariants_random():
    rng = np.random.default_rng(4)
    p = mg(q_dg_max=900.0)
    for _ in range(2000):
        supply = float(rng.uniform(0.0, 4000.0))
        load = float(rng.uniform(0.0, 4000.0))
        p_r, q_r, spill, q_def = restore(p, supply, load)
        assert 0.0 <= p_r <= load + 1e-12
        assert q_r == pytest.approx(p_r * tan_phi(p.power_factor))
        assert q_r <= p.q_dg_max + 1e-9
        assert spill == pytest.approx(supply - p_r)
        assert q_def == 0.0


def test_validate_rejects_bad_params():
    with pytest.raises(ValueError):
        mg(e_dg_min=0.0).validate()
    with pytest.raises(ValueError):
        mg(power_factor=1.5).validate()
    with pytest.raises(ValueError):
        mg(profile=(0.5,) * 23).validate()
    with pytest.raises(ValueError):
        mg(profile=(1.5,) * 24).validate()
    mg().validate()
