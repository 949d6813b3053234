"""Rule-based lane changing: mandatory (route) moves first, then speed gain.

Lane index 0 is the rightmost lane, so MoveLeft means ``lane + 1``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from numba import njit

from .core import VehicleAgent


class Action(enum.IntEnum):
    STAY = 0
    MOVE_LEFT = 1
    MOVE_RIGHT = 2


class Reason(enum.IntEnum):
    NONE = 0
    ROUTE_REQUIRED = 1
    SPEED_GAIN = 2


@dataclass(frozen=True)
class LaneChangeDecision:
    action: Action = Action.STAY
    reason: Reason = Reason.NONE

    @property
    def offset(self):
        return {Action.STAY: 0, Action.MOVE_LEFT: 1, Action.MOVE_RIGHT: -1}[self.action]


STAY = LaneChangeDecision()


@dataclass(frozen=True)
class LaneChangeParams:
    lead_headway: float = 1.0
    lag_headway: float = 1.0
    lag_buffer: float = 2.0
    speed_gain: float = 1.0
    mandatory_window: float = 150.0
    cooldown: float = 3.0

    def __post_init__(self):
        for name in ("lead_headway", "lag_headway", "lag_buffer", "speed_gain",
                     "mandatory_window", "cooldown"):
            if getattr(self, name) < 0:
                raise ValueError(f"lane change {name} must be >= 0")


DEFAULT_LANE_CHANGE = LaneChangeParams()


@dataclass(frozen=True)
class SideNeighbors:
    """Gaps and speeds on one adjacent lane; ``None`` means no vehicle there."""

    lead_gap: float | None = None
    lead_v: float | None = None
    lag_gap: float | None = None
    lag_v: float | None = None


@dataclass(frozen=True)
class Neighborhood:
    """Surroundings of an agent; a side is ``None`` when that lane does not exist."""

    current_leader_v: float | None = None
    left: SideNeighbors | None = None
    right: SideNeighbors | None = None


@njit(cache=True)
def _gap_ok(v, has_lead, lead_gap, has_lag, lag_gap, lag_v,
            lead_headway, lag_headway, lag_buffer):
    if has_lead and lead_gap < v * lead_headway:
        return False
    if has_lag and lag_gap < lag_v * lag_headway + lag_buffer:
        return False
    return True


@njit(cache=True)
def _decide(v, route_dir, dist_to_end, has_cur_leader, cur_leader_v,
            left_exists, l_has_lead, l_lead_gap, l_lead_v, l_has_lag, l_lag_gap, l_lag_v,
            right_exists, r_has_lead, r_lead_gap, r_lead_v, r_has_lag, r_lag_gap, r_lag_v,
            lead_headway, lag_headway, lag_buffer, speed_gain, mandatory_window,
            allow_discretionary):
    """Return (action, reason) codes. ``route_dir`` is +1/-1 when the lane must change."""
    if route_dir != 0:
        if dist_to_end > mandatory_window:
            return 0, 0
        if route_dir > 0 and left_exists:
            if _gap_ok(v, l_has_lead, l_lead_gap, l_has_lag, l_lag_gap, l_lag_v,
                       lead_headway, lag_headway, lag_buffer):
                return 1, 1
        elif route_dir < 0 and right_exists:
            if _gap_ok(v, r_has_lead, r_lead_gap, r_has_lag, r_lag_gap, r_lag_v,
                       lead_headway, lag_headway, lag_buffer):
                return 2, 1
        return 0, 0
    if not has_cur_leader or not allow_discretionary:
        return 0, 0
    if left_exists:
        lv = l_lead_v if l_has_lead else math.inf
        if lv >= cur_leader_v + speed_gain and _gap_ok(
                v, l_has_lead, l_lead_gap, l_has_lag, l_lag_gap, l_lag_v,
                lead_headway, lag_headway, lag_buffer):
            return 1, 2
    if right_exists:
        rv = r_lead_v if r_has_lead else math.inf
        if rv >= cur_leader_v + speed_gain and _gap_ok(
                v, r_has_lead, r_lead_gap, r_has_lag, r_lag_gap, r_lag_v,
                lead_headway, lag_headway, lag_buffer):
            return 2, 2
    return 0, 0


def _side_args(side):
    if side is None:
        return (False, False, 0.0, 0.0, False, 0.0, 0.0)
    return (
        True,
        side.lead_gap is not None,
        float(side.lead_gap or 0.0),
        float(side.lead_v or 0.0),
        side.lag_gap is not None,
        float(side.lag_gap or 0.0),
        float(side.lag_v or 0.0),
    )


def evaluate_lane_change(agent: VehicleAgent, neighbors: Neighborhood, route_need=0,
                         dist_to_end=0.0, params: LaneChangeParams = DEFAULT_LANE_CHANGE):
    """Decide whether ``agent`` should change lanes this step.

    ``route_need`` is +1 (or -1) when the current lane does not continue to the
    agent's next link and the connecting lanes lie to the left (right); 0 when
    the current lane connects. ``dist_to_end`` is the distance to the link end.
    """
    action, reason = _decide(
        float(agent.kinematics.v), int(route_need), float(dist_to_end),
        neighbors.current_leader_v is not None, float(neighbors.current_leader_v or 0.0),
        *_side_args(neighbors.left), *_side_args(neighbors.right),
        params.lead_headway, params.lag_headway, params.lag_buffer,
        params.speed_gain, params.mandatory_window, True,
    )
    return LaneChangeDecision(Action(action), Reason(reason))


def execute_lane_change(agent: VehicleAgent, decision: LaneChangeDecision, n_lanes,
                        target_occupants=()):
    """Move ``agent`` to the target lane, keeping x.

    ``target_occupants`` holds ``(x_front, length)`` for vehicles already in
    the target lane. Returns ``(agent, applied_decision)``; the decision is
    voided to Stay when the move would make any bumper-to-bumper gap negative.
    """
    if decision.action == Action.STAY:
        raise ValueError("execute_lane_change needs a move, got Stay")
    k = agent.kinematics
    target = k.lane + decision.offset
    if not 0 <= target < n_lanes:
        raise ValueError(f"target lane {target} does not exist on a {n_lanes}-lane link")
    length = agent.vclass.length
    for x_other, len_other in target_occupants:
        if x_other >= k.x:
            gap = x_other - len_other - k.x
        else:
            gap = k.x - length - x_other
        if gap < 0:
            return agent, STAY
    return agent.moved(lane=target), decision
