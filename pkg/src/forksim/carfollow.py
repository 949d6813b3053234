"""Three-state car-following kernel: free driving, normal following, emergency.

The scalar ``_*`` functions are numba-compiled and shared with the
simulation kernel; the public wrappers take the domain types and check
preconditions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from numba import njit

from .core import DrivingState, LeaderContext, OverlapFault

SPEED_EPS = 1e-9


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class GhrParams:
    """Asymmetric GHR sensitivities; ``plus`` applies when the follower is not faster."""

    r_plus: float = 1.2
    s_plus: float = 0.0
    t_plus: float = 1.0
    r_minus: float = 1.6
    s_minus: float = 0.0
    t_minus: float = 1.0

    def __post_init__(self):
        if not self.r_plus > 0 or not self.r_minus > 0:
            raise ValueError("GHR r parameters must be > 0")
        if not self.t_plus >= 0 or not self.t_minus >= 0:
            raise ValueError("GHR t parameters must be >= 0")


@dataclass(frozen=True)
class Thresholds:
    """State-classification and clamping constants.

    ``horizon_factor`` and ``min_follow_distance`` set the following horizon
    ``max(v*T + buffer, min_follow_distance) * horizon_factor``. The
    acceleration clamp floor is ``decel_floor_factor * a_normal``.
    """

    horizon_factor: float = 5.0
    min_follow_distance: float = 10.0
    standstill_buffer: float = 1.0
    decel_floor_factor: float = 3.0

    def __post_init__(self):
        if not self.horizon_factor > 0:
            raise ValueError("horizon factor must be > 0")
        if not self.min_follow_distance > 0:
            raise ValueError("minimum follow distance must be > 0")
        if not self.standstill_buffer > 0:
            raise ValueError("standstill buffer must be > 0")
        if not self.decel_floor_factor >= 1:
            raise ValueError("decel floor factor must be >= 1")


DEFAULT_GHR = GhrParams()
DEFAULT_THRESHOLDS = Thresholds()


@njit(cache=True)
def _follow_horizon(v, T, s_buffer, min_follow, horizon_factor):
    return max(v * T + s_buffer, min_follow) * horizon_factor


@njit(cache=True)
def _emergency_distance(v, v_lead, T, a_normal, s_buffer):
    b = -a_normal
    d = v * T + v * v / (2.0 * b) - v_lead * v_lead / (2.0 * b)
    return max(d, s_buffer)


@njit(cache=True)
def _classify(v, has_leader, delta_x, v_lead, T, a_normal, s_buffer, min_follow, horizon_factor):
    if not has_leader:
        return 0
    if delta_x > _follow_horizon(v, T, s_buffer, min_follow, horizon_factor):
        return 0
    if delta_x < _emergency_distance(v, v_lead, T, a_normal, s_buffer):
        return 2
    return 1


@njit(cache=True)
def _free_acceleration(v, v_desired, a_max, a_normal):
    if abs(v - v_desired) <= SPEED_EPS:
        return 0.0
    if v < v_desired:
        return a_max
    return a_normal


@njit(cache=True)
def _ghr(v, v_lead, delta_x, r_plus, s_plus, t_plus, r_minus, s_minus, t_minus):
    if v <= v_lead:
        r, s, t = r_plus, s_plus, t_plus
    else:
        r, s, t = r_minus, s_minus, t_minus
    return r * v**s / delta_x**t * (v_lead - v)


@njit(cache=True)
def _emergency(v, v_lead, a_lead, delta_x, a_normal):
    if v > v_lead:
        dv = v - v_lead
        return min(a_normal, a_lead - 0.5 * dv * dv / delta_x)
    return min(a_normal, a_lead + 0.25 * a_normal)


@njit(cache=True)
def _compose(own_a, leader_a, a_floor, a_max):
    a = max(own_a, leader_a)
    return min(max(a, a_floor), a_max)


def following_horizon(v, T, thresholds=DEFAULT_THRESHOLDS):
    return _follow_horizon(
        float(v), float(T), thresholds.standstill_buffer,
        thresholds.min_follow_distance, thresholds.horizon_factor,
    )


def emergency_distance(v, v_lead, T, a_normal, thresholds=DEFAULT_THRESHOLDS):
    return _emergency_distance(
        float(v), float(v_lead), float(T), float(a_normal), thresholds.standstill_buffer
    )


def classify_state(v, v_desired, leader, T, a_normal=-3.0, thresholds=DEFAULT_THRESHOLDS):
    """Pick the driving regime for this step.

    Free when there is no leader inside the following horizon, Emergency
    when the gap is under the kinematic stopping threshold, else Following.
    ``v_desired`` does not enter the thresholds.
    """
    if v < 0:
        raise DomainError("speed must be >= 0")
    if leader is None:
        return DrivingState.FREE
    if leader.delta_x < 0:
        raise DomainError("leader gap must be >= 0")
    code = _classify(
        float(v), True, float(leader.delta_x), float(leader.leader_v), float(T),
        float(a_normal), thresholds.standstill_buffer,
        thresholds.min_follow_distance, thresholds.horizon_factor,
    )
    return DrivingState(code)


def free_acceleration(v, v_desired, a_max, a_normal):
    if not a_max > 0 or not a_normal < 0:
        raise DomainError("need a_max > 0 and a_normal < 0")
    return _free_acceleration(float(v), float(v_desired), float(a_max), float(a_normal))


def time_to_desired(v, v_desired, a_max, a_normal):
    """Seconds needed to reach the desired speed at the free-driving rate.

    Uses the speed difference, ``|v_desired - v| / |a|``, rather than the
    absolute speed.
    """
    if not a_max > 0 or not a_normal < 0:
        raise DomainError("need a_max > 0 and a_normal < 0")
    diff = v_desired - v
    if abs(diff) <= SPEED_EPS:
        return 0.0
    if diff > 0:
        return diff / a_max
    return -diff / -a_normal


def ghr_acceleration(v_i, ctx: LeaderContext, p: GhrParams = DEFAULT_GHR):
    if not ctx.delta_x > 0:
        raise DomainError(f"GHR needs a positive gap, got {ctx.delta_x}")
    return _ghr(
        float(v_i), float(ctx.leader_v), float(ctx.delta_x),
        p.r_plus, p.s_plus, p.t_plus, p.r_minus, p.s_minus, p.t_minus,
    )


def emergency_deceleration(v_i, ctx: LeaderContext, a_normal):
    if not a_normal < 0:
        raise DomainError("a_normal must be < 0")
    if not ctx.delta_x > 0:
        raise OverlapFault(f"emergency braking with non-positive gap {ctx.delta_x}")
    return _emergency(
        float(v_i), float(ctx.leader_v), float(ctx.leader_a), float(ctx.delta_x), float(a_normal)
    )


def compose_acceleration(own_a, leader_a, state, a_max=math.inf, a_floor=-math.inf):
    """Following-state rule: take the larger of own and leader acceleration, then clamp."""
    if state != DrivingState.FOLLOWING:
        raise DomainError("the max-rule applies only in the Following state")
    return _compose(float(own_a), float(leader_a), float(a_floor), float(a_max))
