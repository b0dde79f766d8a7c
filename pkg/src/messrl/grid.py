"""Microgrid resources: dispatchable generation, stochastic load, and
per-step restoration accounting.

Each microgrid is aggregated to a single bus with one equivalent
dispatchable generator limited in power and in total fuel energy.
Restored load must respect the generator's reactive capacity through
the load power factor, so active restoration is capped at
q_max / tan(acos(pf)).
"""

import math
from dataclasses import dataclass

# Built-in 24-h per-unit demand shapes by customer class.  These are
# stand-ins at realistic granularity; scenario files may override them
# inline or via CSV.
DEFAULT_PROFILES = {
    "commercial": [
        0.45, 0.42, 0.40, 0.40, 0.42, 0.48, 0.58, 0.70, 0.85, 0.95, 1.00,
        1.00, 0.98, 0.97, 0.98, 1.00, 0.97, 0.92, 0.85, 0.75, 0.65, 0.58,
        0.52, 0.48,
    ],
    "residential": [
        0.55, 0.50, 0.47, 0.45, 0.45, 0.50, 0.65, 0.80, 0.75, 0.65, 0.60,
        0.58, 0.60, 0.62, 0.65, 0.70, 0.80, 0.92, 1.00, 0.98, 0.90, 0.80,
        0.70, 0.60,
    ],
    "industrial": [
        0.80, 0.80, 0.80, 0.80, 0.82, 0.85, 0.90, 0.95, 1.00, 1.00, 1.00,
        1.00, 0.98, 1.00, 1.00, 1.00, 0.98, 0.95, 0.90, 0.88, 0.85, 0.82,
        0.80, 0.80,
    ],
}

# Customer interruption cost by class, $/kWh.
DEFAULT_INTERRUPTION_COST = {
    "industrial": 8.0,
    "commercial": 10.0,
    "residential": 2.0,
}


@dataclass(frozen=True)
class MicrogridParams:
    """Static data for one microgrid (all power in kW, energy in kWh)."""

    p_dg_max: float
    q_dg_max: float
    e_dg_max: float
    e_dg_min: float  # fuel reserve that must remain
    power_factor: float
    interruption_cost: float  # $/kWh of unserved load
    gen_cost: float  # $/kWh generated
    load_type: str
    peak_load: float
    profile: tuple = ()  # 24 per-unit values
    sigma_err: float = 0.05  # relative forecast-error std

    def validate(self):
        if not 0.0 < self.e_dg_min < self.e_dg_max:
            raise ValueError(
                f"fuel bounds 0 < {self.e_dg_min} < {self.e_dg_max} violated")
        if not 0.0 < self.power_factor <= 1.0:
            raise ValueError(f"power factor {self.power_factor} outside (0, 1]")
        if self.p_dg_max <= 0 or self.q_dg_max <= 0:
            raise ValueError("generation limits must be positive")
        if self.peak_load < 0:
            raise ValueError("peak load must be non-negative")
        if len(self.profile) != 24:
            raise ValueError(f"profile needs 24 values, got {len(self.profile)}")
        if any(not 0.0 <= v <= 1.0 for v in self.profile):
            raise ValueError("profile values must lie in [0, 1]")
        if self.sigma_err < 0:
            raise ValueError("sigma_err must be non-negative")

    @property
    def q_capacity_active_kw(self):
        """Largest active restoration the reactive limit allows."""
        t = tan_phi(self.power_factor)
        if t == 0.0:
            return float("inf")
        return self.q_dg_max / t


@dataclass(slots=True)
class MicrogridState:
    """Mutable per-episode state of one microgrid."""

    e_dg: float  # remaining fuel energy, kWh
    p_load: float  # realized load this step, kW


def tan_phi(power_factor):
    """tan(acos(pf)): reactive power per unit of active power."""
    return math.tan(math.acos(power_factor))


def sample_load(params, t, rng):
    """Realized load at hour t: forecast times (1 + e), e ~ N(0, sigma^2).

    Clipped into [0, peak_load].  With sigma_err == 0 the rng is not
    consulted, so noise-free scenarios leave generator state untouched.
    """
    if not 0 <= t < 24:
        raise ValueError(f"hour index {t} outside 0..23")
    forecast = params.peak_load * params.profile[t]
    if params.sigma_err == 0.0:
        return forecast
    err = rng.normal(0.0, params.sigma_err)
    return min(max(forecast * (1.0 + err), 0.0), params.peak_load)


def dg_feasible_range(params, state, dt):
    """Generator active-power range (0, p_max) for the coming interval.

    p_max combines the power rating with the fuel still available above
    the reserve, so any dispatch inside the range keeps e_dg >= e_dg_min.
    """
    p_max = min(params.p_dg_max, (state.e_dg - params.e_dg_min) / dt)
    return 0.0, max(p_max, 0.0)


def restore(params, p_supply, p_load):
    """Split a non-negative active supply into restored load and spill.

    Restored active power is limited by the supply, the load itself and
    the reactive capacity of the generator (restored load drags
    tan(acos(pf)) kVar per kW, all of which the generator must cover).
    Surplus active power that cannot be absorbed is returned as spill.

    Returns:
        (p_restored_kw, q_restored_kvar, spill_kw, q_deficit_kvar)
    """
    p_r = min(p_supply, p_load, params.q_capacity_active_kw)
    q_r = p_r * tan_phi(params.power_factor)
    spill = p_supply - p_r
    q_deficit = max(0.0, q_r - params.q_dg_max)  # 0 by construction
    return p_r, q_r, spill, q_deficit
