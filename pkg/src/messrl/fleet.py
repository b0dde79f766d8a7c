"""Mobile storage units: ratings, state of charge, power feasibility.

Sign convention for vehicle power: negative = charging (drawing from a
microgrid), positive = discharging (injecting into a microgrid).  All
functions are pure state transitions; an episode's states are owned by
a single environment instance.
"""

from dataclasses import dataclass

from .transport import AtNode, Location


@dataclass(frozen=True, slots=True)
class MessParams:
    """Ratings of one mobile storage unit.

    capacity_kwh: battery capacity.
    p_charge_max / p_discharge_max: power limits, kW (both positive).
    eta_charge / eta_discharge: efficiencies in (0, 1].
    soc_min / soc_max: allowed state-of-charge window, fractions of
        capacity with 0 <= soc_min < soc_max <= 1.
    speed_kmh: constant average travel speed.
    home_depot: depot id where the unit starts.
    """

    capacity_kwh: float
    p_charge_max: float
    p_discharge_max: float
    eta_charge: float
    eta_discharge: float
    soc_min: float
    soc_max: float
    speed_kmh: float
    home_depot: int
    soc_init: float = 0.5

    def validate(self):
        if not 0.0 <= self.soc_min < self.soc_max <= 1.0:
            raise ValueError(f"bad soc window [{self.soc_min}, {self.soc_max}]")
        if self.capacity_kwh <= 0:
            raise ValueError("capacity must be positive")
        if self.p_charge_max <= 0 or self.p_discharge_max <= 0:
            raise ValueError("power limits must be positive")
        for eta in (self.eta_charge, self.eta_discharge):
            if not 0.0 < eta <= 1.0:
                raise ValueError(f"efficiency {eta} outside (0, 1]")
        if not self.soc_min <= self.soc_init <= self.soc_max:
            raise ValueError("initial soc outside the soc window")
        if self.speed_kmh <= 0:
            raise ValueError("speed must be positive")


@dataclass(slots=True)
class MessState:
    """Mutable per-episode state of one unit."""

    location: Location
    destination: int  # node id of the most recent movement target
    soc: float


def soc_update(params, soc, power_kw, dt):
    """Next state of charge after running at power_kw for dt hours.

    Charging (power_kw < 0) stores eta_charge of the drawn energy;
    discharging (power_kw >= 0) drains 1/eta_discharge of the injected
    energy.  The caller must pre-clip power_kw with
    feasible_power_range; a result outside the soc window means that
    contract was broken.
    """
    if power_kw < 0.0:
        new = soc - params.eta_charge * power_kw * dt / params.capacity_kwh
    else:
        new = soc - power_kw * dt / (params.eta_discharge * params.capacity_kwh)
    if new < params.soc_min - 1e-9 or new > params.soc_max + 1e-9:
        raise ValueError(
            f"soc {new:.6f} left [{params.soc_min}, {params.soc_max}]; "
            f"power {power_kw} kW was not pre-clipped")
    # Clamp float dust from the feasibility boundary.
    return min(max(new, params.soc_min), params.soc_max)


def feasible_power_range(params, soc, staying, dt):
    """Feasible (p_min, p_max) in kW for the coming interval.

    staying is the stay indicator summed over microgrids: 0 while in
    transit or at a depot, which forces the exchange to zero.  Otherwise
    the bounds combine the converter ratings with the soc headroom so
    that any power in the range keeps the next soc inside the window.
    """
    if not staying:
        return 0.0, 0.0
    p_min = -min(params.p_charge_max,
                 (params.soc_max - soc) * params.capacity_kwh
                 / (params.eta_charge * dt))
    p_max = min(params.p_discharge_max,
                (soc - params.soc_min) * params.capacity_kwh
                * params.eta_discharge / dt)
    # Numerical guard: a soc pinned at a bound must not open a sliver
    # of infeasible range.
    return min(p_min, 0.0), max(p_max, 0.0)
