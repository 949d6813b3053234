"""Road network model and the three-road fork / roundabout builder.

Geometry: a single-lane roundabout of inscribed diameter 34 m whose three
connection nodes sit at compass bearings ENE (67.5 deg, toward DOST),
WSW (247.5 deg, toward PNR) and NNE (22.5 deg, toward PNCC along the
ESR). Traffic keeps right, so circulation is counter-clockwise, i.e. by
decreasing bearing: NNE -> WSW -> ENE -> NNE.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

ROUNDABOUT_DIAMETER = 34.0
KMH = 1 / 3.6


class Variant(str, enum.Enum):
    ID0 = "ID0"
    ID1 = "ID1"
    ID2 = "ID2"
    ID3 = "ID3"


class LinkKind(enum.IntEnum):
    APPROACH = 0
    EXIT = 1
    ROUNDABOUT_ARC = 2


class EntryDecision(enum.Enum):
    PROCEED = "proceed"
    YIELD = "yield"


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkParams:
    legal_speed: float = 40 * KMH
    critical_gap: float = 3.0
    zone_approach_length: float = 50.0
    lane_width: float = 3.35
    scan_horizon: float = 200.0

    def __post_init__(self):
        if not self.legal_speed > 0:
            raise ValueError("legal speed must be > 0")
        if not self.critical_gap >= 0:
            raise ValueError("critical gap must be >= 0")
        if not self.zone_approach_length >= 0:
            raise ValueError("zone approach length must be >= 0")
        if not self.lane_width > 0:
            raise ValueError("lane width must be > 0")
        if not self.scan_horizon > 0:
            raise ValueError("scan horizon must be > 0")


@dataclass(frozen=True)
class Lane:
    id: str
    index: int
    width: float

    def __post_init__(self):
        if not self.width > 0:
            raise NetworkError(f"lane {self.id}: width must be > 0")


@dataclass(frozen=True)
class Link:
    id: str
    from_node: str
    to_node: str
    length: float
    lanes: tuple[Lane, ...]
    legal_speed: float
    kind: LinkKind
    # next link id -> lane indices allowed to continue there; absent = all lanes
    lane_connections: dict[str, frozenset[int]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.length > 0:
            raise NetworkError(f"link {self.id}: length must be > 0")
        if not self.lanes:
            raise NetworkError(f"link {self.id}: needs at least one lane")

    @property
    def n_lanes(self):
        return len(self.lanes)

    def connects(self, lane_index, next_link):
        allowed = self.lane_connections.get(next_link)
        return allowed is None or lane_index in allowed


@dataclass(frozen=True)
class Route:
    id: int
    links: tuple[str, ...]
    entry_node: str
    exit_node: str


@dataclass(frozen=True)
class RoadNetwork:
    name: str
    variant: Variant
    nodes: dict[str, tuple[float, float]]
    links: dict[str, Link]
    routes: dict[int, Route]
    # link id -> offset from link start where the measurement zone begins
    zone: dict[str, float]

    def __post_init__(self):
        self.validate()

    def validate(self):
        for link in self.links.values():
            for node in (link.from_node, link.to_node):
                if node not in self.nodes:
                    raise NetworkError(f"link {link.id}: unknown node {node}")
        arcs = self.arcs()
        if arcs:
            seen, cur = [], arcs[0]
            while cur.id not in seen:
                seen.append(cur.id)
                succ = [a for a in arcs if a.from_node == cur.to_node]
                if len(succ) != 1:
                    raise NetworkError("roundabout arcs must form a single directed cycle")
                cur = succ[0]
            if len(seen) != len(arcs) or cur.id != arcs[0].id:
                raise NetworkError("roundabout arcs must form a single directed cycle")
        # boundary nodes are the far ends of the legs, never on the circle
        inner = {a.from_node for a in arcs} | {a.to_node for a in arcs}
        boundary_in = boundary_out = {n for n in self.nodes if n not in inner}
        for route in self.routes.values():
            links = [self.links[i] for i in route.links]
            for a, b in zip(links, links[1:]):
                if a.to_node != b.from_node:
                    raise NetworkError(f"route {route.id}: {a.id} and {b.id} do not share a node")
            if links[0].from_node not in boundary_in or links[-1].to_node not in boundary_out:
                raise NetworkError(f"route {route.id}: must run boundary to boundary")
            if arcs and not any(l.kind == LinkKind.ROUNDABOUT_ARC for l in links):
                raise NetworkError(f"route {route.id}: must traverse a roundabout arc")
        if not self.zone:
            raise NetworkError("measurement zone is empty")
        for link_id, start in self.zone.items():
            if link_id not in self.links:
                raise NetworkError(f"zone names unknown link {link_id}")
            if not 0 <= start <= self.links[link_id].length:
                raise NetworkError(f"zone start on {link_id} outside the link")

    def arcs(self):
        return [l for l in self.links.values() if l.kind == LinkKind.ROUNDABOUT_ARC]

    def arc_cycle_length(self):
        return sum(a.length for a in self.arcs())

    def arc_from(self, node):
        for a in self.arcs():
            if a.from_node == node:
                return a
        return None

    def route(self, route_id):
        return route_links(self, route_id)


def route_links(network, route_id):
    """Ordered Link objects of a route."""
    try:
        route = network.routes[route_id]
    except KeyError:
        raise NetworkError(f"unknown route id {route_id!r}") from None
    return [network.links[i] for i in route.links]


# bearings of the roundabout connection nodes, degrees clockwise from north
NODE_BEARINGS = {"BR_E": 67.5, "BR_W": 247.5, "BR_N": 22.5}
APPROACH_LENGTHS = {"pnr": 106.0, "dost": 100.0, "pncc": 150.0}

_ROUTES = {
    1: ("pnr_in", "arc_we", "dost_out"),
    2: ("pnr_in", "arc_we", "arc_en", "pncc_out"),
    3: ("dost_in", "arc_en", "arc_nw", "pnr_out"),
    4: ("dost_in", "arc_en", "pncc_out"),
    5: ("pncc_in", "arc_nw", "pnr_out"),
    6: ("pncc_in", "arc_nw", "arc_we", "dost_out"),
}

# links widened to three lanes under each variant
WIDENED = {
    Variant.ID0: (),
    Variant.ID1: ("pnr_in", "dost_in"),
    Variant.ID2: ("pnr_in", "dost_out"),
    Variant.ID3: ("pncc_in", "pnr_out"),
}


def _ccw_angle(from_bearing, to_bearing):
    return (from_bearing - to_bearing) % 360.0


def _xy(bearing, dist):
    rad = math.radians(bearing)
    return (dist * math.sin(rad), dist * math.cos(rad))


def build_br_network(variant=Variant.ID0, params: NetworkParams | None = None):
    """Build the fork network for one infrastructure variant.

    All approaches and exits have two lanes except the ones widened to three
    by the variant. Link lengths and topology never change between variants.
    """
    params = params or NetworkParams()
    variant = Variant(variant)
    radius = ROUNDABOUT_DIAMETER / 2
    circumference = math.pi * ROUNDABOUT_DIAMETER
    bearing = {"pnr": NODE_BEARINGS["BR_W"], "dost": NODE_BEARINGS["BR_E"], "pncc": NODE_BEARINGS["BR_N"]}
    conn = {"pnr": "BR_W", "dost": "BR_E", "pncc": "BR_N"}

    nodes = {n: _xy(b, radius) for n, b in NODE_BEARINGS.items()}
    for leg, dist in APPROACH_LENGTHS.items():
        nodes[leg.upper()] = _xy(bearing[leg], radius + dist)

    widened = WIDENED[variant]

    def lanes(link_id, n):
        if link_id in widened:
            n = 3
        return tuple(Lane(f"{link_id}/{i}", i, params.lane_width) for i in range(n))

    links = {}
    for leg, dist in APPROACH_LENGTHS.items():
        boundary, node = leg.upper(), conn[leg]
        links[f"{leg}_in"] = Link(f"{leg}_in", boundary, node, dist, lanes(f"{leg}_in", 2),
                                  params.legal_speed, LinkKind.APPROACH)
        links[f"{leg}_out"] = Link(f"{leg}_out", node, boundary, dist, lanes(f"{leg}_out", 2),
                                   params.legal_speed, LinkKind.EXIT)
    for arc_id, a, b in (("arc_nw", "BR_N", "BR_W"), ("arc_we", "BR_W", "BR_E"), ("arc_en", "BR_E", "BR_N")):
        length = circumference * _ccw_angle(NODE_BEARINGS[a], NODE_BEARINGS[b]) / 360.0
        links[arc_id] = Link(arc_id, a, b, length, lanes(arc_id, 1), params.legal_speed,
                             LinkKind.ROUNDABOUT_ARC)

    routes = {
        rid: Route(rid, ids, links[ids[0]].from_node, links[ids[-1]].to_node)
        for rid, ids in _ROUTES.items()
    }
    zone = {}
    for link in links.values():
        if link.kind == LinkKind.ROUNDABOUT_ARC:
            zone[link.id] = 0.0
        elif link.kind == LinkKind.APPROACH:
            zone[link.id] = max(0.0, link.length - params.zone_approach_length)
    return RoadNetwork("br", variant, nodes, links, routes, zone)


@dataclass(frozen=True)
class CirculatingVehicle:
    """A vehicle on the roundabout as seen from an entry.

    ``exit_node`` is where the vehicle leaves the circle; vehicles leaving
    at or before the conflict node never reach it.
    """

    link: str
    x: float
    v: float
    length: float = 4.5
    exit_node: str | None = None


def distance_to_node(network, link_id, x, node, exit_node=None):
    """Distance along the arc cycle from a front position to ``node``.

    Returns ``None`` when the vehicle leaves the circle before getting there.
    """
    link = network.links[link_id]
    dist = link.length - x
    at = link.to_node
    for _ in range(len(network.arcs()) + 1):
        if at == exit_node:
            return None
        if at == node:
            return dist
        nxt = network.arc_from(at)
        if nxt is None:
            return None
        dist += nxt.length
        at = nxt.to_node
    return None


def roundabout_entry_check(network, approach_link, circulating, critical_gap=None,
                           clearance=1.0):
    """Yield if a circulating vehicle would reach the entry's conflict node within the critical gap.

    Also yields when a vehicle that just passed the node still overhangs it
    by less than ``clearance``.
    """
    params_gap = 3.0 if critical_gap is None else critical_gap
    link = network.links[approach_link]
    node = link.to_node
    downstream = network.arc_from(node)
    dists, speeds = [], []
    for veh in circulating:
        if downstream is not None and veh.link == downstream.id and veh.x - veh.length < clearance:
            return EntryDecision.YIELD
        d = distance_to_node(network, veh.link, veh.x, node, veh.exit_node)
        if d is not None:
            dists.append(d)
            speeds.append(veh.v)
    d = np.asarray(dists, dtype=float)
    if must_yield(d, np.asarray(speeds, dtype=float), len(d), float(params_gap)):
        return EntryDecision.YIELD
    return EntryDecision.PROCEED


@njit(cache=True)
def must_yield(dists, speeds, n, critical_gap):
    for k in range(n):
        if speeds[k] > 0.0 and dists[k] < critical_gap * speeds[k]:
            return True
    return False
