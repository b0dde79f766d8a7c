"""The restoration MDP: observation encoding, action decoding with
feasibility projection, transition dynamics and the reward.

One environment instance owns one episode at a time.  Actions may
request anything; infeasible requests are projected onto the feasible
set and the clipped magnitude (in kWh-equivalents) is charged to the
penalty term instead of aborting the step.

Step semantics for interval t:
    1. each vehicle moves toward its designated target node; the stay
       indicator per microgrid comes from the before/after locations
    2. vehicle and generator powers are clipped to their feasible ranges
    3. net supply per microgrid = generation + sum of vehicle exchange;
       if charging exceeds generation, charging is scaled back pro-rata
    4. supply is split into restored load and spill per microgrid
    5. soc and fuel are updated, loads for t+1 are realized
    6. the reward is assembled from the dollar terms and the penalty
"""

import copy
from dataclasses import dataclass

import numpy as np

from . import fleet, grid
from .transport import AtNode, OnEdge, advance, at_microgrid, shortest_path


@dataclass(frozen=True)
class Action:
    """Decoded action: per vehicle a destination category index and a
    signed power request (kW), per microgrid a generation request (kW).
    """

    kappa: tuple
    p_mess: tuple
    p_dg: tuple


@dataclass(frozen=True)
class RewardBreakdown:
    """Per-step reward decomposition.

    The four cost/value terms are dollars for the interval; penalty is
    the kWh-equivalent sum of constraint-violation magnitudes.  The
    scalar reward is
        r = lambda_obj * (restoration_value - gen_cost - battery_cost
                          - transport_cost) - lambda_pen * penalty
    """

    restoration_value: float
    gen_cost: float
    battery_cost: float
    transport_cost: float
    penalty: float
    r: float


def reward_terms(mg_terms, mess_terms, c_bat, c_tran, penalty_kwh,
                 lambda_obj, lambda_pen, dt, extra_transport_cost=0.0):
    """Assemble the per-step reward.

    Args:
        mg_terms: per microgrid (interruption_cost, p_restored, gen_cost,
            p_dg) with powers in kW.
        mess_terms: per vehicle (p_mess, moved) where moved is 1 if the
            vehicle changed position during the interval.
        penalty_kwh: summed violation magnitudes, kWh-equivalent.
        extra_transport_cost: extra dollars added to the transport term
            (used for the optional charged return trip at the horizon).
    """
    restoration_value = sum(w * p_r for w, p_r, _, _ in mg_terms) * dt
    gen_cost = sum(c * p for _, _, c, p in mg_terms) * dt
    battery_cost = c_bat * sum(abs(p) for p, _ in mess_terms) * dt
    transport_cost = (c_tran * sum(moved for _, moved in mess_terms) * dt
                      + extra_transport_cost)
    r = (lambda_obj * (restoration_value - gen_cost - battery_cost
                       - transport_cost)
         - lambda_pen * penalty_kwh)
    return RewardBreakdown(restoration_value, gen_cost, battery_cost,
                           transport_cost, penalty_kwh, r)


def serialize_location(loc):
    if isinstance(loc, AtNode):
        return {"node": loc.node}
    return {"edge": [loc.a, loc.b], "offsets": [loc.dist_a, loc.dist_b]}


def deserialize_location(data):
    if "node" in data:
        return AtNode(int(data["node"]))
    a, b = data["edge"]
    da, db = data["offsets"]
    return OnEdge(int(a), float(da), int(b), float(db))


class EpisodeDone(RuntimeError):
    """step() called on a finished episode."""


class RestorationEnv:
    """Markov decision process for joint vehicle routing and dispatch."""

    def __init__(self, config):
        config.validate()
        self.config = config
        self.net = config.network
        self.horizon = config.horizon
        self.dt = config.dt
        self.mg_ids = config.microgrid_ids()
        self.mess_ids = config.mess_ids()
        self.mg_params = [config.microgrids[m] for m in self.mg_ids]
        self.mess_params = [config.mess_units[w] for w in self.mess_ids]

        # Destination categories: microgrids in id order, then depots.
        self.categories = ([("microgrid", m, self.net.microgrid_node(m))
                            for m in self.mg_ids]
                           + [("depot", d, self.net.depot_node(d))
                              for d in sorted(self.net.depot_map)])
        self.n_categories = len(self.categories)
        self.poi_nodes = [c[2] for c in self.categories]
        # Upper bound on any location-to-node distance, for normalizing
        # the observation: graph diameter plus half the longest edge.
        self.dist_norm = self.net.diameter() + self.net.max_edge_weight() / 2.0

        n_mess, n_mg = len(self.mess_ids), len(self.mg_ids)
        self.action_dim = n_mess * self.n_categories + n_mess + n_mg
        self.observation_dim = 1 + 2 * n_mg + n_mess * (1 + self.n_categories)

        self._t = 0
        self._done = True
        self._mess = []
        self._mg = []
        self._rng = None

    # ------------------------------------------------------------------
    # episode control

    def reset(self, seed=None):
        """Start a new episode; deterministic for a given seed."""
        self._rng = np.random.default_rng(seed)
        self._t = 0
        self._done = self.horizon == 0
        self._mess = []
        for params in self.mess_params:
            node = self.net.depot_node(params.home_depot)
            self._mess.append(fleet.MessState(location=AtNode(node),
                                              destination=node,
                                              soc=params.soc_init))
        self._mg = [grid.MicrogridState(e_dg=p.e_dg_max,
                                        p_load=grid.sample_load(p, 0, self._rng))
                    for p in self.mg_params]
        return self.observation()

    @property
    def t(self):
        return self._t

    @property
    def done(self):
        return self._done

    @property
    def mess_states(self):
        return self._mess

    @property
    def mg_states(self):
        return self._mg

    # ------------------------------------------------------------------
    # observation / action codecs

    def _location_distances(self, loc):
        out = []
        for node in self.poi_nodes:
            if isinstance(loc, AtNode):
                d = self.net.node_distance(loc.node, node)
            else:
                d = min(loc.dist_a + self.net.node_distance(loc.a, node),
                        loc.dist_b + self.net.node_distance(loc.b, node))
            out.append(d / self.dist_norm if self.dist_norm else 0.0)
        return out

    def observation(self):
        """Encode the current state as a vector with components in [0, 1].

        Layout: [t/T] then per microgrid load/peak, then per microgrid
        normalized remaining fuel, then per vehicle soc followed by its
        normalized shortest-path distance to every destination category.
        """
        obs = [self._t / self.horizon if self.horizon else 1.0]
        for params, state in zip(self.mg_params, self._mg):
            obs.append(state.p_load / params.peak_load
                       if params.peak_load > 0 else 0.0)
        for params, state in zip(self.mg_params, self._mg):
            obs.append((state.e_dg - params.e_dg_min)
                       / (params.e_dg_max - params.e_dg_min))
        for state in self._mess:
            obs.append(state.soc)
            obs.extend(self._location_distances(state.location))
        return np.asarray(obs, dtype=np.float64)

    def decode_action(self, raw):
        """Map a raw vector in [-1, 1]^D to a structured Action.

        Destination choices are the argmax of each vehicle's category
        block (ties to the lowest index); powers are affine maps of
        their component onto the rated ranges.
        """
        raw = np.asarray(raw, dtype=np.float64)
        if raw.shape != (self.action_dim,):
            raise ValueError(
                f"action vector has shape {raw.shape}, "
                f"expected ({self.action_dim},)")
        n_mess = len(self.mess_ids)
        kappa, p_mess, p_dg = [], [], []
        off = 0
        for _ in range(n_mess):
            block = raw[off:off + self.n_categories]
            kappa.append(int(np.argmax(block)))
            off += self.n_categories
        for params in self.mess_params:
            x = float(raw[off])
            p_mess.append(-params.p_charge_max
                          + (x + 1.0) / 2.0
                          * (params.p_discharge_max + params.p_charge_max))
            off += 1
        for params in self.mg_params:
            p_dg.append((float(raw[off]) + 1.0) / 2.0 * params.p_dg_max)
            off += 1
        return Action(tuple(kappa), tuple(p_mess), tuple(p_dg))

    def category_node(self, index):
        return self.categories[index][2]

    # ------------------------------------------------------------------
    # dynamics

    def step(self, action):
        """Advance one interval.  Returns (obs, reward, done, info)."""
        if self._done:
            raise EpisodeDone("episode is finished; call reset()")
        if (len(action.kappa) != len(self.mess_ids)
                or len(action.p_dg) != len(self.mg_ids)):
            raise ValueError("action does not match scenario dimensions")
        dt = self.dt
        n_mg = len(self.mg_ids)

        # 1. movement and stay indicators
        zeta = []  # zeta[w][m]
        moved = []
        locs_before = [s.location for s in self._mess]
        for w, (params, state) in enumerate(zip(self.mess_params, self._mess)):
            dest = self.category_node(action.kappa[w])
            new_loc = advance(self.net, state.location, dest,
                              params.speed_kmh, dt)
            zeta.append([at_microgrid(self.net, state.location, new_loc, m)
                         for m in self.mg_ids])
            moved.append(0 if new_loc == state.location else 1)
            state.location = new_loc
            state.destination = dest

        # 2. feasibility projection
        power_clip = 0.0
        dg_clip = 0.0
        p_mess = []
        for w, (params, state) in enumerate(zip(self.mess_params, self._mess)):
            staying = sum(zeta[w])
            lo, hi = fleet.feasible_power_range(params, state.soc, staying, dt)
            p = min(max(action.p_mess[w], lo), hi)
            power_clip += abs(action.p_mess[w] - p)
            p_mess.append(p)
        p_dg = []
        for m, (params, state) in enumerate(zip(self.mg_params, self._mg)):
            lo, hi = grid.dg_feasible_range(params, state, dt)
            p = min(max(action.p_dg[m], lo), hi)
            dg_clip += abs(action.p_dg[m] - p)
            p_dg.append(p)

        # 3. net supply; charging may not exceed local generation
        scaleback = 0.0
        supply = [0.0] * n_mg
        for m in range(n_mg):
            pos = p_dg[m]
            neg = 0.0
            for w in range(len(self._mess)):
                if zeta[w][m]:
                    if p_mess[w] >= 0.0:
                        pos += p_mess[w]
                    else:
                        neg += -p_mess[w]
            if neg > pos:
                scale = pos / neg if neg > 0 else 0.0
                for w in range(len(self._mess)):
                    if zeta[w][m] and p_mess[w] < 0.0:
                        p_mess[w] *= scale
                scaleback += neg - pos
            # max() kills the float dust a scaled-back charge leaves
            supply[m] = max(0.0, p_dg[m]
                            + sum(p_mess[w] for w in range(len(self._mess))
                                  if zeta[w][m]))

        # 4. restoration split
        spill_total = 0.0
        p_restored, q_restored, spills = [], [], []
        for m, params in enumerate(self.mg_params):
            p_r, q_r, spill, _ = grid.restore(params, supply[m],
                                              self._mg[m].p_load)
            p_restored.append(p_r)
            q_restored.append(q_r)
            spills.append(spill)
            spill_total += spill

        # 5. storage, fuel and next-step loads
        for w, (params, state) in enumerate(zip(self.mess_params, self._mess)):
            state.soc = fleet.soc_update(params, state.soc, p_mess[w], dt)
        for m, (params, state) in enumerate(zip(self.mg_params, self._mg)):
            state.e_dg -= p_dg[m] * dt
        loads_now = [s.p_load for s in self._mg]
        self._t += 1
        self._done = self._t >= self.horizon
        for m, (params, state) in enumerate(zip(self.mg_params, self._mg)):
            # Past the horizon there is no further demand to observe.
            state.p_load = (grid.sample_load(params, self._t, self._rng)
                            if not self._done else 0.0)

        # 6. reward
        extra_transport = 0.0
        if self._done and self.config.charge_return_trip:
            for params, state in zip(self.mess_params, self._mess):
                home = min(shortest_path(self.net, state.location,
                                         self.net.depot_node(d))[0]
                           for d in sorted(self.net.depot_map))
                extra_transport += (self.config.c_tran
                                    * home / params.speed_kmh)
        penalty_kwh = (power_clip + dg_clip + scaleback + spill_total) * dt
        mg_terms = [(params.interruption_cost, p_restored[m], params.gen_cost,
                     p_dg[m]) for m, params in enumerate(self.mg_params)]
        mess_terms = list(zip(p_mess, moved))
        breakdown = reward_terms(mg_terms, mess_terms, self.config.c_bat,
                                 self.config.c_tran, penalty_kwh,
                                 self.config.lambda_obj,
                                 self.config.lambda_pen, dt,
                                 extra_transport_cost=extra_transport)

        record = {
            "t": self._t - 1,
            "mess": [{
                "id": self.mess_ids[w],
                "location": serialize_location(self._mess[w].location),
                "kappa": action.kappa[w],
                "dest_node": self._mess[w].destination,
                "p_set": action.p_mess[w],
                "p": p_mess[w],
                "soc": self._mess[w].soc,
                "staying_at": next((self.mg_ids[m] for m in range(n_mg)
                                    if zeta[w][m]), None),
                "moved": moved[w],
            } for w in range(len(self._mess))],
            "microgrids": [{
                "id": self.mg_ids[m],
                "p_dg_set": action.p_dg[m],
                "p_dg": p_dg[m],
                "p_load": loads_now[m],
                "p_r": p_restored[m],
                "q_r": q_restored[m],
                "spill": spills[m],
                "e_dg": self._mg[m].e_dg,
            } for m in range(n_mg)],
            "reward": {
                "restoration_value": breakdown.restoration_value,
                "gen_cost": breakdown.gen_cost,
                "battery_cost": breakdown.battery_cost,
                "transport_cost": breakdown.transport_cost,
                "penalty": breakdown.penalty,
                "r": breakdown.r,
            },
        }
        info = {
            "breakdown": breakdown,
            "violations": {
                "power_clip_kwh": power_clip * dt,
                "dg_clip_kwh": dg_clip * dt,
                "charge_scaleback_kwh": scaleback * dt,
                "spill_kwh": spill_total * dt,
            },
            "record": record,
        }
        return self.observation(), breakdown.r, self._done, info

    # ------------------------------------------------------------------
    # snapshot / restore (Markov-property and oracle support)

    def get_state(self):
        """Snapshot of the full internal state, JSON-serializable."""
        return {
            "t": self._t,
            "done": self._done,
            "mess": [{"location": serialize_location(s.location),
                      "destination": s.destination,
                      "soc": s.soc} for s in self._mess],
            "microgrids": [{"e_dg": s.e_dg, "p_load": s.p_load}
                           for s in self._mg],
            "rng": copy.deepcopy(self._rng.bit_generator.state),
        }

    def set_state(self, snapshot):
        self._t = snapshot["t"]
        self._done = snapshot["done"]
        self._mess = [fleet.MessState(
            location=deserialize_location(s["location"]),
            destination=s["destination"], soc=s["soc"])
            for s in snapshot["mess"]]
        self._mg = [grid.MicrogridState(e_dg=s["e_dg"], p_load=s["p_load"])
                    for s in snapshot["microgrids"]]
        if self._rng is None:
            self._rng = np.random.default_rng()
        self._rng.bit_generator.state = copy.deepcopy(snapshot["rng"])
