"""Reference policies and a small exact solver.

The random and greedy policies bound learned performance from below;
value iteration on a discretized, noise-free scenario bounds it from
above.  The oracle's transition dynamics are the environment's own
step() restricted to a discrete action grid, so a disagreement between
oracle and rollout values indicates divergent dynamics, not modeling
slack.
"""

import itertools
import json
from dataclasses import dataclass

import numpy as np

from . import fleet, grid
from .env import Action
from .transport import AtNode

_EPS = 1e-9


class OracleError(ValueError):
    """Scenario unsuitable for exact enumeration."""


# ----------------------------------------------------------------------
# simple policies


def run_episode(env, act_fn, seed=None):
    """Roll one episode with act_fn(env) -> Action.

    Returns (undiscounted return, list of step records).
    """
    env.reset(seed)
    total = 0.0
    records = []
    done = False
    while not done:
        _, r, done, info = env.step(act_fn(env))
        total += r
        records.append(info["record"])
    return total, records


def random_policy(env, seed=None):
    """Episode return of uniform raw actions; reproducible per seed."""
    action_rng = np.random.default_rng(
        None if seed is None else seed + 1_000_003)

    def act(e):
        return e.decode_action(action_rng.uniform(-1.0, 1.0,
                                                  size=e.action_dim))
    total, _ = run_episode(env, act, seed=seed)
    return total


def _load_caps(env):
    # Restorable load per microgrid: demand clipped by reactive capacity.
    return [min(s.p_load, p.q_capacity_active_kw)
            for p, s in zip(env.mg_params, env.mg_states)]


def _dg_limits(env):
    return [grid.dg_feasible_range(p, s, env.dt)[1]
            for p, s in zip(env.mg_params, env.mg_states)]


def _category_of_node(env, node):
    for i, (_, _, cat_node) in enumerate(env.categories):
        if cat_node == node:
            return i
    return None


def _home_category(env, w):
    depot = env.mess_params[w].home_depot
    depot_ids = sorted(env.net.depot_map)
    return len(env.mg_ids) + depot_ids.index(depot)


def idle_action(env):
    """Do nothing: vehicles hold position (or head home), zero power."""
    kappa = []
    for w, state in enumerate(env.mess_states):
        cat = None
        if isinstance(state.location, AtNode):
            cat = _category_of_node(env, state.location.node)
        kappa.append(cat if cat is not None else _home_category(env, w))
    return Action(tuple(kappa), (0.0,) * len(env.mess_states),
                  (0.0,) * len(env.mg_ids))


def no_mess_action(env):
    """Greedy generator dispatch with the vehicle fleet forced idle."""
    caps = _load_caps(env)
    limits = _dg_limits(env)
    p_dg = tuple(min(limits[m], caps[m]) for m in range(len(caps)))
    idle = idle_action(env)
    return Action(idle.kappa, idle.p_mess, p_dg)


def greedy_policy(env):
    """Myopic full-state heuristic.

    Generators run at their feasible maximum toward restorable load.
    While unmet load exists anywhere, each vehicle chases the microgrid
    with the highest-valued residual (interruption cost times load the
    generator cannot cover) and discharges its feasible maximum into it;
    a low battery first recharges where the marginal value of energy is
    lowest (the cheapest microgrid with spare generation).  With every
    load met the fleet parks.  Deterministic: identical states give
    identical actions.
    """
    dt = env.dt
    n_mg = len(env.mg_ids)
    caps = _load_caps(env)
    limits = _dg_limits(env)
    residual = [max(0.0, caps[m] - limits[m]) for m in range(n_mg)]
    value = [env.mg_params[m].interruption_cost * residual[m]
             for m in range(n_mg)]
    spare = [max(0.0, limits[m] - caps[m]) for m in range(n_mg)]

    best_d = max(range(n_mg), key=lambda m: (value[m], -m)) \
        if any(v > _EPS for v in value) else None
    charge_candidates = [m for m in range(n_mg) if spare[m] > _EPS]
    best_c = min(charge_candidates,
                 key=lambda m: (env.mg_params[m].interruption_cost, m)) \
        if charge_candidates else None

    kappa, p_mess = [], []
    charge_draw = [0.0] * n_mg
    discharge_into = [0.0] * n_mg
    for w, (params, state) in enumerate(zip(env.mess_params, env.mess_states)):
        here = state.location.node if isinstance(state.location, AtNode) \
            else None
        at_mg = None
        for m in range(n_mg):
            if here is not None and here == env.net.microgrid_node(
                    env.mg_ids[m]):
                at_mg = m
                break

        if best_d is None:
            # nothing is unmet anywhere: park, exchange nothing
            cat = (_category_of_node(env, here)
                   if here is not None else None)
            kappa.append(cat if cat is not None else _home_category(env, w))
            p_mess.append(0.0)
            continue

        soc_mid = (params.soc_min + params.soc_max) / 2.0
        lo, hi = fleet.feasible_power_range(params, state.soc, 1, dt)
        if at_mg == best_d and hi > _EPS and residual[best_d] > _EPS:
            p = min(hi, residual[best_d])
            kappa.append(at_mg)
            p_mess.append(p)
            discharge_into[at_mg] += p
            continue
        recharging = (best_c is not None
                      and state.soc < params.soc_max - _EPS)
        if (recharging and at_mg == best_c and -lo > _EPS
                and spare[best_c] - charge_draw[best_c] > _EPS):
            p = -min(-lo, spare[best_c] - charge_draw[best_c])
            kappa.append(at_mg)
            p_mess.append(p)
            charge_draw[at_mg] += -p
            continue
        # routing: a low battery heads for cheap energy first
        if recharging and state.soc <= soc_mid:
            kappa.append(best_c)
        elif state.soc > params.soc_min + _EPS:
            kappa.append(best_d)
        elif recharging:
            kappa.append(best_c)
        else:
            cat = (_category_of_node(env, here)
                   if here is not None else None)
            kappa.append(cat if cat is not None else _home_category(env, w))
        p_mess.append(0.0)

    p_dg = []
    for m in range(n_mg):
        needed = caps[m] + charge_draw[m] - discharge_into[m]
        p_dg.append(min(limits[m], max(0.0, needed)))
    return Action(tuple(kappa), tuple(p_mess), tuple(p_dg))


# ----------------------------------------------------------------------
# exact solver


@dataclass
class OracleResult:
    """Converged values and greedy policy of the discretized scenario."""

    values: dict  # state key -> optimal value-to-go
    policy: dict  # state key -> index into actions
    actions: list
    initial_key: tuple
    state_count: int
    sweeps: int
    n_dg_levels: int

    @property
    def optimal_value(self):
        return self.values[self.initial_key]

    def export_json(self, path):
        with open(path, "w") as fh:
            json.dump({"optimal_value": self.optimal_value,
                       "state_count": self.state_count,
                       "values": {repr(k): v for k, v in
                                  sorted(self.values.items())}},
                      fh, indent=1)


def discrete_actions(env, n_dg_levels=5):
    """The oracle's action grid: per vehicle every destination category
    and power in {-charge max, 0, discharge max}; per microgrid evenly
    spaced generation levels from 0 to the rating."""
    mess_choices = []
    for params in env.mess_params:
        powers = [-params.p_charge_max, 0.0, params.p_discharge_max]
        mess_choices.append([(k, p) for k in range(env.n_categories)
                             for p in powers])
    dg_choices = []
    for params in env.mg_params:
        step = params.p_dg_max / (n_dg_levels - 1)
        dg_choices.append([i * step for i in range(n_dg_levels)])
    actions = []
    for mess_combo in itertools.product(*mess_choices):
        for dg_combo in itertools.product(*dg_choices):
            kappa = tuple(k for k, _ in mess_combo)
            p_mess = tuple(p for _, p in mess_combo)
            actions.append(Action(kappa, p_mess, tuple(dg_combo)))
    return actions


def _float_gcd(values, tol=1e-9):
    g = 0.0
    for v in values:
        v = abs(v)
        while v > tol:
            g, v = v, g % v
    return g


class _Lattice:
    """Quantization of soc and fuel implied by the discrete action grid;
    validates that the scenario stays exactly on it.

    Charging can be scaled back pro-rata to the local generation, so the
    soc quantum must divide every achievable supply level, not just the
    converter ratings; with more than one vehicle the pro-rata split can
    leave any fixed lattice, hence the single-vehicle limit.
    """

    def __init__(self, env, n_dg_levels):
        self.env = env
        if len(env.mess_params) > 1:
            raise OracleError(
                "exact enumeration supports at most one vehicle (pro-rata "
                "charge scaling is not lattice-closed for fleets)")
        power_quanta = [p.p_dg_max / (n_dg_levels - 1)
                        for p in env.mg_params]
        for p in env.mess_params:
            power_quanta.extend([p.p_charge_max, p.p_discharge_max])
        g = _float_gcd(power_quanta)
        for v in power_quanta:
            if abs(v / g - round(v / g)) > 1e-6:
                raise OracleError("power ratings share no common quantum")
        self.soc_q = []
        for w, p in enumerate(env.mess_params):
            q = p.eta_charge * g * env.dt / p.capacity_kwh
            q_dch = p.p_discharge_max * env.dt / (p.eta_discharge
                                                  * p.capacity_kwh)
            if abs(q_dch / q - round(q_dch / q)) > 1e-6:
                raise OracleError(
                    f"mess {env.mess_ids[w]}: the discharge soc step "
                    f"{q_dch:.6g} is not a multiple of the charge "
                    f"quantum {q:.6g}; the induced lattice is not closed")
            for name, val in (("soc window", p.soc_max - p.soc_min),
                              ("initial soc", p.soc_init - p.soc_min)):
                if abs(val / q - round(val / q)) > 1e-6:
                    raise OracleError(
                        f"mess {env.mess_ids[w]}: {name} is not a "
                        f"multiple of the soc quantum {q:.6g}")
            self.soc_q.append(q)
        self.fuel_q = []
        for m, p in enumerate(env.mg_params):
            q = p.p_dg_max * env.dt / (n_dg_levels - 1)
            span = p.e_dg_max - p.e_dg_min
            if abs(span / q - round(span / q)) > 1e-6:
                raise OracleError(
                    f"microgrid {env.mg_ids[m]}: fuel span {span} is not "
                    f"a multiple of the level step {q:.6g} kWh")
            self.fuel_q.append(q)
        for p in env.mg_params:
            if p.sigma_err != 0.0:
                raise OracleError("oracle needs zero forecast noise")
        reach = min(p.speed_kmh * env.dt for p in env.mess_params) \
            if env.mess_params else float("inf")
        for a in env.poi_nodes:
            for b in env.poi_nodes:
                if env.net.node_distance(a, b) > reach + _EPS:
                    raise OracleError(
                        f"trip {a} -> {b} cannot complete within one "
                        "step; vehicle positions would leave the node set")

    def key_of(self, snapshot):
        t = snapshot["t"]
        locs = []
        for s in snapshot["mess"]:
            if "node" not in s["location"]:
                raise OracleError(f"off-node vehicle position at t={t}")
            locs.append(s["location"]["node"])
        socs = []
        for w, s in enumerate(snapshot["mess"]):
            p = self.env.mess_params[w]
            q = (s["soc"] - p.soc_min) / self.soc_q[w]
            if abs(q - round(q)) > 1e-6:
                raise OracleError(
                    f"soc {s['soc']} off-lattice at t={t}")
            socs.append(int(round(q)))
        fuels = []
        for m, s in enumerate(snapshot["microgrids"]):
            p = self.env.mg_params[m]
            q = (s["e_dg"] - p.e_dg_min) / self.fuel_q[m]
            if abs(q - round(q)) > 1e-6:
                raise OracleError(
                    f"fuel {s['e_dg']} off-lattice at t={t}")
            fuels.append(int(round(q)))
        return (t, tuple(locs), tuple(socs), tuple(fuels))

    def snapshot_of(self, key):
        t, locs, socs, fuels = key
        env = self.env
        done = t >= env.horizon
        return {
            "t": t,
            "done": done,
            "mess": [{
                "location": {"node": locs[w]},
                "destination": locs[w],
                "soc": env.mess_params[w].soc_min + socs[w] * self.soc_q[w],
            } for w in range(len(socs))],
            "microgrids": [{
                "e_dg": env.mg_params[m].e_dg_min + fuels[m] * self.fuel_q[m],
                "p_load": (env.mg_params[m].peak_load
                           * env.mg_params[m].profile[t])
                if not done else 0.0,
            } for m in range(len(fuels))],
            "rng": np.random.default_rng(0).bit_generator.state,
        }


def value_iteration(env, n_dg_levels=5, tol=1e-9, max_states=1_000_000):
    """Solve the discretized scenario exactly.

    Enumerates the states reachable from reset under the discrete action
    grid (transitions taken literally from env.step), then sweeps
    Bellman backups until the sup-norm change drops below tol.  Values
    are undiscounted returns-to-go, directly comparable to episode
    returns.
    """
    lattice = _Lattice(env, n_dg_levels)
    actions = discrete_actions(env, n_dg_levels)
    env.reset(seed=0)
    initial_key = lattice.key_of(env.get_state())

    transitions = {}
    layers = [{initial_key}]
    total_states = 1
    for t in range(env.horizon):
        frontier = layers[-1]
        nxt = set()
        for key in frontier:
            snap = lattice.snapshot_of(key)
            for ai, action in enumerate(actions):
                env.set_state(snap)
                _, r, done, _ = env.step(action)
                nkey = lattice.key_of(env.get_state())
                transitions[(key, ai)] = (r, nkey)
                if not done and nkey not in nxt:
                    nxt.add(nkey)
        total_states += len(nxt)
        if total_states > max_states:
            raise OracleError(
                f"state-space overflow: more than {max_states} states")
        layers.append(nxt)

    values = {}
    for layer in layers:
        for key in layer:
            values[key] = 0.0
    for (_, _), (_, nkey) in transitions.items():
        values.setdefault(nkey, 0.0)  # terminal states, value 0

    nonterminal = [key for layer in layers for key in layer
                   if key[0] < env.horizon]
    policy = {}
    sweeps = 0
    while True:
        sweeps += 1
        delta = 0.0
        for key in nonterminal:
            best, best_ai = None, None
            for ai in range(len(actions)):
                r, nkey = transitions[(key, ai)]
                v = r + values[nkey]
                if best is None or v > best + _EPS:
                    best, best_ai = v, ai
            delta = max(delta, abs(values[key] - best))
            values[key] = best
            policy[key] = best_ai
        if delta < tol:
            break
        if sweeps > env.horizon + 2:
            raise OracleError("value iteration failed to converge")

    return OracleResult(values=values, policy=policy, actions=actions,
                        initial_key=initial_key,
                        state_count=len(values), sweeps=sweeps,
                        n_dg_levels=n_dg_levels)


def rollout_oracle_policy(env, result, seed=0):
    """Replay the oracle's greedy policy through the live environment."""
    lattice = _Lattice(env, result.n_dg_levels)
    env.reset(seed)
    total = 0.0
    done = False
    while not done:
        key = lattice.key_of(env.get_state())
        action = result.actions[result.policy[key]]
        _, r, done, _ = env.step(action)
        total += r
    return total
