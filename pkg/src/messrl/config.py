"""Scenario configuration: one INI-style text file drives everything.

A scenario file names the road network, the microgrid and vehicle
parameter blocks, cost coefficients, reward scales and the learning
hyperparameters.  Parsing is strict: unknown cross-references or
non-positive ratings fail fast with a ConfigError.
"""

import configparser
import csv
import io
import os
from dataclasses import dataclass, field

from .fleet import MessParams
from .grid import DEFAULT_INTERRUPTION_COST, DEFAULT_PROFILES, MicrogridParams
from .transport import NetworkError, load_network

SCENARIO_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)),
                            "scenarios")


class ConfigError(ValueError):
    """Raised for unparseable or inconsistent scenario files."""


@dataclass(frozen=True)
class TD3Hyper:
    """Learning configuration; all fields overridable from the [td3]
    section of a scenario file."""

    gamma: float = 0.99
    tau: float = 0.005
    sigma_explore: float = 0.1
    sigma_target: float = 0.2
    noise_clip: float = 0.5
    policy_delay: int = 2
    batch_size: int = 256
    buffer_capacity: int = 100_000
    warmup_episodes: int = 300
    lr_actor: float = 3e-4
    lr_critic: float = 3e-4
    hidden: tuple = (256, 256)

    def validate(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma {self.gamma} outside [0, 1]")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError(f"tau {self.tau} outside (0, 1]")
        if self.noise_clip <= 0:
            raise ConfigError("noise_clip must be positive")
        if self.policy_delay < 1:
            raise ConfigError("policy_delay must be >= 1")
        if self.batch_size < 1 or self.buffer_capacity < self.batch_size:
            raise ConfigError("need buffer_capacity >= batch_size >= 1")
        if self.sigma_explore < 0 or self.sigma_target < 0:
            raise ConfigError("noise stds must be non-negative")
        if min(self.hidden) < 1:
            raise ConfigError("hidden sizes must be positive")


@dataclass(frozen=True)
class TrainSettings:
    episodes: int = 10_000
    validate_every: int = 100
    validation_episodes: int = 20

    def validate(self):
        if self.episodes < 1 or self.validate_every < 1:
            raise ConfigError("episodes and validate_every must be >= 1")
        if self.validation_episodes < 1:
            raise ConfigError("validation_episodes must be >= 1")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to build an environment and train on it."""

    name: str
    network_file: str
    horizon: int
    dt: float
    seed: int
    c_bat: float  # $/kWh cycled through vehicle batteries
    c_tran: float  # $/h while a vehicle is moving
    lambda_obj: float  # reward scale on the dollar objective
    lambda_pen: float  # reward scale on kWh-equivalent violations
    charge_return_trip: bool
    microgrids: dict  # id -> MicrogridParams
    mess_units: dict  # id -> MessParams
    td3: TD3Hyper
    train: TrainSettings
    network: object = field(compare=False, repr=False, default=None)

    def validate(self):
        if self.horizon < 0 or self.horizon > 24:
            raise ConfigError(f"horizon {self.horizon} outside 0..24")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        for val, name in ((self.c_bat, "c_bat"), (self.c_tran, "c_tran")):
            if val < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.lambda_obj <= 0 or self.lambda_pen < 0:
            raise ConfigError("lambda_obj must be > 0 and lambda_pen >= 0")
        net = self.network
        for m in net.microgrid_map:
            if m not in self.microgrids:
                raise ConfigError(
                    f"network places microgrid {m} but no parameter block")
        if not self.microgrids:
            raise ConfigError("at least one microgrid is required")
        for m, params in self.microgrids.items():
            if m not in net.microgrid_map:
                raise ConfigError(f"microgrid {m} not placed in network file")
            try:
                params.validate()
            except ValueError as exc:
                raise ConfigError(f"microgrid {m}: {exc}") from None
        for w, params in self.mess_units.items():
            try:
                params.validate()
            except ValueError as exc:
                raise ConfigError(f"mess {w}: {exc}") from None
            if params.home_depot not in net.depot_map:
                raise ConfigError(
                    f"mess {w} references unknown depot {params.home_depot}")
        self.td3.validate()
        self.train.validate()

    def microgrid_ids(self):
        return sorted(self.microgrids)

    def mess_ids(self):
        return sorted(self.mess_units)


def resolve_scenario(name_or_path):
    """Resolve a scenario argument: literal path first, then the
    bundled scenarios directory."""
    if os.path.exists(name_or_path):
        return name_or_path
    candidate = os.path.join(SCENARIO_DIR, name_or_path)
    if os.path.exists(candidate):
        return candidate
    raise ConfigError(f"scenario file not found: {name_or_path}")


def _parse_profile(section, base_dir, load_type):
    inline = section.get("profile", "").strip()
    csv_path = section.get("profile_csv", "").strip()
    if inline and csv_path:
        raise ConfigError("give either profile or profile_csv, not both")
    if inline:
        values = [float(v) for v in inline.replace(",", " ").split()]
    elif csv_path:
        path = os.path.join(base_dir, csv_path)
        if not os.path.exists(path):
            raise ConfigError(f"profile csv not found: {path}")
        values = [0.0] * 24
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                values[int(row["hour"])] = float(row["pu"])
    else:
        if load_type not in DEFAULT_PROFILES:
            raise ConfigError(f"unknown load type {load_type!r}")
        values = DEFAULT_PROFILES[load_type]
    if len(values) != 24:
        raise ConfigError(f"profile needs 24 values, got {len(values)}")
    return tuple(values)


def _microgrid_from_section(mid, section, base_dir):
    load_type = section.get("load_type", "commercial").strip()
    default_w = DEFAULT_INTERRUPTION_COST.get(load_type)
    w = section.getfloat("interruption_cost", fallback=default_w)
    if w is None:
        raise ConfigError(
            f"microgrid {mid}: interruption_cost required for load type "
            f"{load_type!r}")
    return MicrogridParams(
        p_dg_max=section.getfloat("p_dg_max"),
        q_dg_max=section.getfloat("q_dg_max"),
        e_dg_max=section.getfloat("e_dg_max"),
        e_dg_min=section.getfloat("e_dg_min"),
        power_factor=section.getfloat("power_factor", fallback=0.9),
        interruption_cost=w,
        gen_cost=section.getfloat("gen_cost", fallback=0.5),
        load_type=load_type,
        peak_load=section.getfloat("peak_load"),
        profile=_parse_profile(section, base_dir, load_type),
        sigma_err=section.getfloat("sigma_err", fallback=0.05),
    )


def _mess_from_section(section):
    return MessParams(
        capacity_kwh=section.getfloat("capacity", fallback=1000.0),
        p_charge_max=section.getfloat("p_charge_max", fallback=400.0),
        p_discharge_max=section.getfloat("p_discharge_max", fallback=400.0),
        eta_charge=section.getfloat("eta_charge", fallback=0.95),
        eta_discharge=section.getfloat("eta_discharge", fallback=0.95),
        soc_min=section.getfloat("soc_min", fallback=0.1),
        soc_max=section.getfloat("soc_max", fallback=0.9),
        speed_kmh=section.getfloat("speed", fallback=30.0),
        home_depot=section.getint("depot"),
        soc_init=section.getfloat("soc_init", fallback=0.5),
    )


def _hyper_from_section(section):
    defaults = TD3Hyper()
    hidden = section.get("hidden", None)
    if hidden is not None:
        hidden = tuple(int(v) for v in hidden.replace(",", " ").split())
    else:
        hidden = defaults.hidden
    return TD3Hyper(
        gamma=section.getfloat("gamma", fallback=defaults.gamma),
        tau=section.getfloat("tau", fallback=defaults.tau),
        sigma_explore=section.getfloat("sigma_explore",
                                       fallback=defaults.sigma_explore),
        sigma_target=section.getfloat("sigma_target",
                                      fallback=defaults.sigma_target),
        noise_clip=section.getfloat("noise_clip",
                                    fallback=defaults.noise_clip),
        policy_delay=section.getint("policy_delay",
                                    fallback=defaults.policy_delay),
        batch_size=section.getint("batch_size", fallback=defaults.batch_size),
        buffer_capacity=section.getint("buffer_capacity",
                                       fallback=defaults.buffer_capacity),
        warmup_episodes=section.getint("warmup_episodes",
                                       fallback=defaults.warmup_episodes),
        lr_actor=section.getfloat("lr_actor", fallback=defaults.lr_actor),
        lr_critic=section.getfloat("lr_critic", fallback=defaults.lr_critic),
        hidden=hidden,
    )


def load_scenario(path):
    """Parse and validate a scenario file, loading its network too."""
    path = resolve_scenario(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"{path}: {exc}") from None

    base_dir = os.path.dirname(os.path.abspath(path))
    try:
        sc = parser["scenario"]
        microgrids, mess_units = {}, {}
        for name in parser.sections():
            parts = name.split()
            if parts[0] == "microgrid" and len(parts) == 2:
                microgrids[int(parts[1])] = _microgrid_from_section(
                    int(parts[1]), parser[name], base_dir)
            elif parts[0] == "mess" and len(parts) == 2:
                mess_units[int(parts[1])] = _mess_from_section(parser[name])

        network_file = os.path.join(base_dir, sc.get("network"))
        network = load_network(network_file)
        td3 = (_hyper_from_section(parser["td3"]) if parser.has_section("td3")
               else TD3Hyper())
        if parser.has_section("train"):
            tr = parser["train"]
            train = TrainSettings(
                episodes=tr.getint("episodes", fallback=10_000),
                validate_every=tr.getint("validate_every", fallback=100),
                validation_episodes=tr.getint("validation_episodes",
                                              fallback=20),
            )
        else:
            train = TrainSettings()
        if not parser.has_section("costs"):
            parser.add_section("costs")
        getf = parser["costs"].getfloat
        config = ScenarioConfig(
            name=sc.get("name", os.path.basename(path)),
            network_file=sc.get("network"),
            horizon=sc.getint("horizon", fallback=24),
            dt=sc.getfloat("dt", fallback=1.0),
            seed=sc.getint("seed", fallback=0),
            c_bat=getf("c_bat", fallback=0.2),
            c_tran=getf("c_tran", fallback=80.0),
            lambda_obj=getf("lambda_obj", fallback=1e-4),
            lambda_pen=getf("lambda_pen", fallback=1e-3),
            charge_return_trip=sc.getboolean("charge_return_trip",
                                             fallback=False),
            microgrids=microgrids,
            mess_units=mess_units,
            td3=td3,
            train=train,
            network=network,
        )
    except (KeyError, ValueError, TypeError, NetworkError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    config.validate()
    return config


def dump_scenario(config):
    """Serialize a ScenarioConfig back to INI text.

    load_scenario(dump) round-trips to an equal configuration (the
    network file itself is referenced, not embedded).
    """
    parser = configparser.ConfigParser()
    parser["scenario"] = {
        "name": config.name,
        "network": config.network_file,
        "horizon": str(config.horizon),
        "dt": repr(config.dt),
        "seed": str(config.seed),
        "charge_return_trip": str(config.charge_return_trip).lower(),
    }
    parser["costs"] = {
        "c_bat": repr(config.c_bat),
        "c_tran": repr(config.c_tran),
        "lambda_obj": repr(config.lambda_obj),
        "lambda_pen": repr(config.lambda_pen),
    }
    for m in config.microgrid_ids():
        p = config.microgrids[m]
        parser[f"microgrid {m}"] = {
            "p_dg_max": repr(p.p_dg_max),
            "q_dg_max": repr(p.q_dg_max),
            "e_dg_max": repr(p.e_dg_max),
            "e_dg_min": repr(p.e_dg_min),
            "power_factor": repr(p.power_factor),
            "interruption_cost": repr(p.interruption_cost),
            "gen_cost": repr(p.gen_cost),
            "load_type": p.load_type,
            "peak_load": repr(p.peak_load),
            "profile": " ".join(repr(v) for v in p.profile),
            "sigma_err": repr(p.sigma_err),
        }
    for w in config.mess_ids():
        p = config.mess_units[w]
        parser[f"mess {w}"] = {
            "capacity": repr(p.capacity_kwh),
            "p_charge_max": repr(p.p_charge_max),
            "p_discharge_max": repr(p.p_discharge_max),
            "eta_charge": repr(p.eta_charge),
            "eta_discharge": repr(p.eta_discharge),
            "soc_min": repr(p.soc_min),
            "soc_max": repr(p.soc_max),
            "soc_init": repr(p.soc_init),
            "speed": repr(p.speed_kmh),
            "depot": str(p.home_depot),
        }
    h = config.td3
    parser["td3"] = {
        "gamma": repr(h.gamma),
        "tau": repr(h.tau),
        "sigma_explore": repr(h.sigma_explore),
        "sigma_target": repr(h.sigma_target),
        "noise_clip": repr(h.noise_clip),
        "policy_delay": str(h.policy_delay),
        "batch_size": str(h.batch_size),
        "buffer_capacity": str(h.buffer_capacity),
        "warmup_episodes": str(h.warmup_episodes),
        "lr_actor": repr(h.lr_actor),
        "lr_critic": repr(h.lr_critic),
        "hidden": " ".join(str(v) for v in h.hidden),
    }
    t = config.train
    parser["train"] = {
        "episodes": str(t.episodes),
        "validate_every": str(t.validate_every),
        "validation_episodes": str(t.validation_episodes),
    }
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
