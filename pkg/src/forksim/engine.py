"""World state, stepping, replications and experiment runs.

The heavy lifting happens in :mod:`forksim.kernel`; this module owns the
world arrays, seeding, arrival queues and result extraction.
"""

from __future__ import annotations

import csv
import io
import logging
from collections import namedtuple
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernel as K
from .core import ClassName, DrivingState, LeaderContext, OverlapFault, SimClock, VehicleAgent, KinematicState
from .demand import arrival_schedule
from .metrics import Aggregate, TrajectoryRecord, aggregate
from .network import LinkKind

log = logging.getLogger(__name__)

_GOLDEN = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1

RECORD_COLUMNS = ("id", "class", "route", "entry_s", "exit_s", "stopped_s", "dist_m", "zone_s")


def splitmix64(x):
    x = (x + _GOLDEN) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def replication_seed(seed, rep_index):
    """64-bit seed for one replication, a pure function of (seed, rep_index)."""
    return splitmix64(splitmix64(seed & _MASK) ^ (rep_index & _MASK))


class SimulationFault(RuntimeError):
    def __init__(self, message, rep_index=None):
        super().__init__(message)
        self.rep_index = rep_index


@dataclass(frozen=True)
class SimSettings:
    """Everything the kernel needs besides the network."""

    dt: float
    ghr: object
    thresholds: object
    lane_change: object
    network_params: object
    stop_speed: float = 0.1

    @classmethod
    def from_scenario(cls, s):
        return cls(s.dt, s.ghr, s.thresholds, s.lane_change, s.network_params, s.stop_speed)

    def vector(self):
        p = np.zeros(K.N_PARAMS)
        p[K.P_DT] = self.dt
        th, g, lc, npar = self.thresholds, self.ghr, self.lane_change, self.network_params
        p[K.P_H] = th.horizon_factor
        p[K.P_MINF] = th.min_follow_distance
        p[K.P_SBUF] = th.standstill_buffer
        p[K.P_FLOOR] = th.decel_floor_factor
        p[K.P_RP], p[K.P_SP], p[K.P_TP] = g.r_plus, g.s_plus, g.t_plus
        p[K.P_RM], p[K.P_SM], p[K.P_TM] = g.r_minus, g.s_minus, g.t_minus
        p[K.P_LC_LEAD] = lc.lead_headway
        p[K.P_LC_LAG] = lc.lag_headway
        p[K.P_LC_BUF] = lc.lag_buffer
        p[K.P_LC_GAIN] = lc.speed_gain
        p[K.P_LC_WIN] = lc.mandatory_window
        p[K.P_LC_COOL] = lc.cooldown
        p[K.P_GAP] = npar.critical_gap
        p[K.P_SCAN] = npar.scan_horizon
        p[K.P_VSTOP] = self.stop_speed
        return p


def default_settings(dt=0.1):
    from .scenario import Scenario

    return SimSettings.from_scenario(Scenario(dt=dt))


def net_arrays(network):
    link_ids = list(network.links)
    index = {lid: k for k, lid in enumerate(link_ids)}
    node_ids = list(network.nodes)
    nindex = {n: k for k, n in enumerate(node_ids)}
    links = [network.links[l] for l in link_ids]
    nl = np.array([l.n_lanes for l in links], np.int64)
    lane_base = np.concatenate([[0], np.cumsum(nl)[:-1]]).astype(np.int64)
    zone_start = np.array([network.zone.get(l.id, np.inf) for l in links], np.float64)
    max_lanes = int(nl.max())
    conn = np.zeros((len(links), max_lanes, len(links)), np.bool_)
    for a, la in enumerate(links):
        for b, lb in enumerate(links):
            for ln in range(la.n_lanes):
                conn[a, ln, b] = la.connects(ln, lb.id)
    node_down_arc = np.full(len(node_ids), -1, np.int64)
    arc_ids = []
    for k, l in enumerate(links):
        if l.kind == LinkKind.ROUNDABOUT_ARC:
            node_down_arc[nindex[l.from_node]] = k
            arc_ids.append(k)
    route_ids = sorted(network.routes)
    kmax = max(len(network.routes[r].links) for r in route_ids)
    route_links = np.full((len(route_ids), kmax), -1, np.int64)
    route_nlinks = np.zeros(len(route_ids), np.int64)
    route_exit_node = np.full(len(route_ids), -1, np.int64)
    for k, r in enumerate(route_ids):
        ids = network.routes[r].links
        route_links[k, : len(ids)] = [index[i] for i in ids]
        route_nlinks[k] = len(ids)
        arcs = [network.links[i] for i in ids if network.links[i].kind == LinkKind.ROUNDABOUT_ARC]
        if arcs:
            route_exit_node[k] = nindex[arcs[-1].to_node]
    arrays = K.NetArrays(
        link_length=np.array([l.length for l in links], np.float64),
        link_nlanes=nl,
        link_kind=np.array([int(l.kind) for l in links], np.int64),
        lane_base=lane_base,
        zone_start=zone_start,
        link_to_node=np.array([nindex[l.to_node] for l in links], np.int64),
        link_from_node=np.array([nindex[l.from_node] for l in links], np.int64),
        node_down_arc=node_down_arc,
        arc_ids=np.array(arc_ids, np.int64),
        conn=conn,
        route_links=route_links,
        route_nlinks=route_nlinks,
        route_exit_node=route_exit_node,
    )
    return arrays, index, route_ids, int(nl.sum())


class World:
    """Mutable simulation state on one network.

    Agents live in a structured numpy array (see ``kernel.AGENT_DTYPE``);
    ``agent(i)`` returns a :class:`VehicleAgent` snapshot.
    """

    def __init__(self, network, settings=None, classes=None, check_every=100, seed=None):
        from .core import default_classes

        self.network = network
        self.settings = settings or default_settings()
        self.classes = tuple(classes) if classes is not None else default_classes()
        self.class_index = {c.name: k for k, c in enumerate(self.classes)}
        self.net, self.link_index, self.route_ids, self.n_lane_uids = net_arrays(network)
        self.link_ids = list(network.links)
        self.route_index = {r: k for k, r in enumerate(self.route_ids)}
        self.params = self.settings.vector()
        self.clock = SimClock(self.settings.dt)
        self.check_every = check_every
        self.seed = seed
        self.counters = np.zeros(K.N_COUNTERS, np.int64)
        self.agents = np.zeros(0, K.AGENT_DTYPE)
        self.active = np.zeros(0, np.int64)
        self._n = 0
        self._queue_links = sorted({self.net.route_links[k, 0] for k in range(len(self.route_ids))})
        self.q_link = np.array(self._queue_links, np.int64)
        self.q_items = np.zeros((len(self._queue_links), 0), np.int64)
        self.q_len = np.zeros(len(self._queue_links), np.int64)
        self.q_ptr = np.zeros(len(self._queue_links), np.int64)
        self._grow(64)

    # -- storage -----------------------------------------------------------
    def _grow(self, capacity):
        if capacity <= len(self.agents):
            return
        agents = np.zeros(capacity, K.AGENT_DTYPE)
        agents[: self._n] = self.agents[: self._n]
        active = np.zeros(capacity, np.int64)
        active[: len(self.active)] = self.active
        self.agents, self.active = agents, active
        self.work = K.make_work(capacity, self.n_lane_uids)

    def _new_row(self, vclass, route, v_desired):
        if self._n >= len(self.agents):
            self._grow(max(64, 2 * len(self.agents)))
        i = self._n
        self._n += 1
        vc = self.classes[self.class_index[ClassName(vclass)]]
        row = self.agents[i]
        row["klass"] = self.class_index[vc.name]
        row["route"] = self.route_index[route]
        row["length"] = vc.length
        row["buffer"] = vc.effective_length - vc.length
        row["a_max"] = vc.a_max
        row["a_normal"] = vc.a_normal
        row["T"] = vc.reaction_time
        row["vdes"] = v_desired if v_desired is not None else min(
            vc.desired_speed_mean, self.settings.network_params.legal_speed)
        row["lc_timer"] = self.settings.lane_change.cooldown
        return i

    @property
    def n_agents(self):
        return self._n

    @property
    def n_active(self):
        return int(self.counters[K.C_NACT])

    @property
    def injected(self):
        return int(self.counters[K.C_INJ])

    @property
    def exited(self):
        return int(self.counters[K.C_EXIT])

    def active_ids(self):
        return [int(i) for i in self.active[: self.n_active]]

    # -- population --------------------------------------------------------
    def add_agent(self, vclass, route, link, lane, x, v, v_desired=None, a=0.0):
        """Place an active agent directly; returns its id."""
        i = self._new_row(vclass, route, v_desired)
        row = self.agents[i]
        r = self.route_index[route]
        lk = self.link_index[link]
        rpos = list(self.net.route_links[r]).index(lk)
        row["status"] = K.ACTIVE
        row["link"], row["lane"], row["rpos"] = lk, lane, rpos
        row["x"], row["v"], row["a"] = x, v, a
        row["entry_t"] = self.clock.t
        self.active[self.n_active] = i
        self.counters[K.C_NACT] += 1
        self.counters[K.C_INJ] += 1
        return i

    def schedule(self, arrivals):
        """Queue arrivals outside the network; they enter when space allows."""
        per_link = {lk: [] for lk in self._queue_links}
        for arr in arrivals:
            i = self._new_row(arr.vclass, arr.route, arr.v_initial)
            row = self.agents[i]
            row["status"] = K.PENDING
            row["t_arrival"] = arr.time
            row["v_init"] = arr.v_initial
            per_link[self.net.route_links[self.route_index[arr.route], 0]].append(i)
        old = [list(self.q_items[e, : self.q_len[e]]) for e in range(len(self._queue_links))]
        merged = []
        for e, lk in enumerate(self._queue_links):
            items = old[e] + per_link[lk]
            items.sort(key=lambda j: (self.agents[j]["t_arrival"], j))
            merged.append(items)
        width = max([len(m) for m in merged] + [1])
        self.q_items = np.zeros((len(merged), width), np.int64)
        for e, items in enumerate(merged):
            self.q_items[e, : len(items)] = items
            self.q_len[e] = len(items)

    # -- stepping ----------------------------------------------------------
    def run(self, n_steps):
        code = K.run_steps(
            n_steps, self.clock.steps, self.agents, self.active, self.net, self.params, self.work,
            self.counters, self.q_link, self.q_items, self.q_len, self.q_ptr, self.check_every,
        )
        if code != 0:
            step = int(self.counters[K.C_STEP])
            self.clock.steps = step + 1
            self.clock.t = self.clock.steps * self.clock.dt
            f, l = int(self.counters[K.C_F1]), int(self.counters[K.C_F2])
            raise OverlapFault(
                f"overlap fault at step {step} (t={step * self.clock.dt:.1f} s, seed={self.seed}): "
                f"follower {f} {self._describe(f)} / leader {l} {self._describe(l)}",
                seed=self.seed, step=step, pair=(f, l),
            )
        self.clock.steps += n_steps
        self.clock.t = self.clock.steps * self.clock.dt
        return self

    def _describe(self, i):
        if i < 0:
            return "-"
        r = self.agents[i]
        return f"[{self.link_ids[r['link']]}/{r['lane']} x={r['x']:.3f} v={r['v']:.3f} L={r['length']:.2f}]"

    def check_invariants(self):
        """Raise OverlapFault on any same-lane overlap or negative speed."""
        code = K.check_overlap(self.agents, self.active, self.n_active, self.net, self.work, self.counters)
        if code:
            f, l = int(self.counters[K.C_F1]), int(self.counters[K.C_F2])
            raise OverlapFault(f"invariant violated: {self._describe(f)} vs {self._describe(l)}",
                               seed=self.seed, step=self.clock.steps, pair=(f, l))

    # -- views -------------------------------------------------------------
    def agent(self, i):
        r = self.agents[i]
        return VehicleAgent(
            id=int(i),
            vclass=self.classes[int(r["klass"])],
            route=self.route_ids[int(r["route"])],
            kinematics=KinematicState(float(r["x"]), int(r["lane"]), float(r["v"]), float(r["a"])),
            v_desired=float(r["vdes"]),
            link=self.link_ids[int(r["link"])],
            driving_state=DrivingState(int(r["state"])),
            entry_time=float(r["entry_t"]),
            stopped_time=float(r["zone_stop"]),
            distance=float(r["zone_dist"]),
            time_in_zone=float(r["zone_time"]),
        )

    def lane_members(self, link, lane):
        lk = self.link_index[link]
        ids = [i for i in self.active_ids() if self.agents[i]["link"] == lk and self.agents[i]["lane"] == lane]
        return sorted(ids, key=lambda i: self.agents[i]["x"])


def step(world, network=None, params=None):
    """Advance ``world`` by one time step (two-phase synchronous update)."""
    return world.run(1)


def leader_of(world, agent_id):
    """Nearest vehicle ahead along the agent's route, within the scan horizon.

    Returns ``(leader_id, LeaderContext)`` or ``None``. Stop lines are not
    vehicles and are ignored here.
    """
    K.build_lanes(world.agents, world.active, world.n_active, world.net, world.work)
    K.find_leader(agent_id, world.agents, world.net, world.params, world.work, 2)
    wk = world.work
    if not wk.ld_has[agent_id]:
        return None
    me = world.agents[agent_id]
    j = int(wk.ld_id[agent_id])
    ctx = LeaderContext(
        delta_x=float(wk.ld_dx[agent_id]),
        delta_v=float(wk.ld_v[agent_id] - me["v"]),
        leader_v=float(wk.ld_v[agent_id]),
        leader_a=float(wk.ld_a[agent_id]),
        leader_length=float(wk.ld_len[agent_id]),
    )
    return j, ctx


ReplicationCounts = namedtuple("ReplicationCounts", "injected exited active queued blocked_steps lane_changes holds")


@dataclass
class ReplicationResult:
    rep_index: int
    seed: int
    records: list[TrajectoryRecord]
    censored: int
    summary: Aggregate
    counts: ReplicationCounts
    discarded_warmup: int = 0

    @property
    def empty(self):
        return self.summary.empty

    def to_csv(self):
        return records_csv(self.records)


def records_csv(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_COLUMNS)
    for r in records:
        w.writerow([r.id, r.vclass, r.route, f"{r.entry_s:.1f}", f"{r.exit_s:.1f}",
                    f"{r.stopped_s:.1f}", f"{r.dist_m:.4f}", f"{r.zone_s:.1f}"])
    return buf.getvalue()


def extract_records(world, warmup, end):
    """Split zone traversals into completed records, censored and warmup-discarded counts."""
    ag = world.agents[: world.n_agents]
    records, censored, discarded = [], 0, 0
    eps = 1e-9
    for i in range(world.n_agents):
        row = ag[i]
        z = int(row["zone_in"])
        if z == 0:
            continue
        if row["zone_entry_t"] < warmup - eps:
            discarded += 1
            continue
        if z == 1:
            censored += 1
            continue
        if row["zone_exit_t"] > end + eps:
            censored += 1
            continue
        records.append(TrajectoryRecord(
            id=i,
            vclass=world.classes[int(row["klass"])].name.value,
            route=world.route_ids[int(row["route"])],
            entry_s=float(row["zone_entry_t"]),
            exit_s=float(row["zone_exit_t"]),
            stopped_s=float(row["zone_stop"]),
            dist_m=float(row["zone_dist"]),
            zone_s=float(row["zone_time"]),
        ))
    return records, censored, discarded


def run_replication(scenario, network=None, rep_index=0, check_every=100):
    """One seeded run: warmup, then the measurement window."""
    network = network or scenario.build_network()
    seed = replication_seed(scenario.seed, rep_index)
    rng = np.random.Generator(np.random.PCG64(seed))
    total = scenario.total_time
    arrivals = arrival_schedule(scenario.demand, total, scenario.volume_multiplier, rng,
                                scenario.classes, scenario.network_params.legal_speed)
    world = World(network, SimSettings.from_scenario(scenario), scenario.classes,
                  check_every=check_every, seed=seed)
    world._grow(len(arrivals) + 1)
    world.schedule(arrivals)
    n_steps = int(round(total / scenario.dt))
    try:
        world.run(n_steps)
    except OverlapFault as exc:
        raise SimulationFault(f"replication {rep_index}: {exc}", rep_index) from exc
    records, censored, discarded = extract_records(world, scenario.warmup, total)
    counts = ReplicationCounts(
        injected=world.injected, exited=world.exited, active=world.n_active,
        queued=len(arrivals) - world.injected,
        blocked_steps=int(world.counters[K.C_BLOCK]), lane_changes=int(world.counters[K.C_LC]),
        holds=int(world.counters[K.C_HOLD]),
    )
    return ReplicationResult(rep_index, seed, records, censored, aggregate(records, censored), counts, discarded)


def _run_one(args):
    scenario, rep = args
    return run_replication(scenario, None, rep)


def run_experiment(scenario, network=None, workers=1):
    """All replications of a scenario, in rep_index order."""
    reps = range(scenario.replications)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_one, (scenario, r)) for r in reps]
            results = []
            for r, fut in zip(reps, futures):
                try:
                    results.append(fut.result())
                except SimulationFault:
                    raise
                except Exception as exc:
                    raise SimulationFault(f"replication {r} failed: {exc}", r) from exc
            return results
    network = network or scenario.build_network()
    return [run_replication(scenario, network, r) for r in reps]
