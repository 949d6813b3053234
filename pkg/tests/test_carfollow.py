import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from forksim.carfollow import (
    DomainError,
    GhrParams,
    Thresholds,
    classify_state,
    compose_acceleration,
    emergency_deceleration,
    emergency_distance,
    following_horizon,
    free_acceleration,
    ghr_acceleration,
    time_to_desired,
)
from forksim.core import DrivingState, LeaderContext, OverlapFault


def ctx(dx, v_lead=0.0, a_lead=0.0, v_follow=0.0, length=4.5):
    return LeaderContext(dx, v_lead - v_follow, v_lead, a_lead, length)


def test_no_leader_is_free():
    assert classify_state(10.0, 11.0, None, 1.0) == DrivingState.FREE


def test_following_horizon_has_minimum():
    # max(v*T + s, 10) * 5
    assert following_horizon(0.0, 1.0) == pytest.approx(50.0)
    assert following_horizon(20.0, 1.0) == pytest.approx(105.0)


def test_emergency_distance_formula():
    # v*T + (v^2 - vl^2) / (2|a_n|), floored at the buffer
    assert emergency_distance(10.0, 5.0, 1.0, -3.0) == pytest.approx(10 + 75 / 6)
    assert emergency_distance(0.0, 10.0, 1.0, -3.0) == pytest.approx(1.0)


def test_classification_bands():
    v, T = 10.0, 1.0
    assert classify_state(v, 11.0, ctx(200.0, 10.0), T) == DrivingState.FREE
    assert classify_state(v, 11.0, ctx(30.0, 10.0), T) == DrivingState.FOLLOWING
    assert classify_state(v, 11.0, ctx(5.0, 0.0), T) == DrivingState.EMERGENCY


def test_classification_rejects_bad_domain():
    with pytest.raises(DomainError):
        classify_state(-1.0, 10.0, None, 1.0)
    with pytest.raises(DomainError):
        classify_state(1.0, 10.0, ctx(-0.5), 1.0)


@given(st.floats(0, 30), st.floats(0, 30), st.floats(0, 300), st.floats(-5, -0.5))
def test_emergency_band_lies_inside_following_horizon_or_is_emergency(v, vl, dx, a_n):
    state = classify_state(v, 10.0, ctx(dx, vl), 1.0, a_n)
    if dx > following_horizon(v, 1.0):
        assert state == DrivingState.FREE
    elif dx < emergency_distance(v, vl, 1.0, a_n):
        assert state == DrivingState.EMERGENCY
    else:
        assert state == DrivingState.FOLLOWING


def test_free_acceleration_cases():
    assert free_acceleration(5.0, 10.0, 2.5, -3.0) == 2.5
    assert free_acceleration(12.0, 10.0, 2.5, -3.0) == -3.0
    assert free_acceleration(10.0, 10.0, 2.5, -3.0) == 0.0


def test_time_to_desired_uses_speed_difference():
    assert time_to_desired(4.0, 10.0, 2.0, -3.0) == pytest.approx(3.0)
    assert time_to_desired(16.0, 10.0, 2.0, -3.0) == pytest.approx(2.0)
    assert time_to_desired(10.0, 10.0, 2.0, -3.0) == 0.0


def test_ghr_examples():
    p = GhrParams()
    # follower slower than leader: r+ * (vl - v) / dx
    assert ghr_acceleration(8.0, ctx(20.0, 10.0, v_follow=8.0), p) == pytest.approx(1.2 * 2 / 20)
    # follower faster: r- sensitivity
    assert ghr_acceleration(12.0, ctx(20.0, 10.0, v_follow=12.0), p) == pytest.approx(-1.6 * 2 / 20)
    assert ghr_acceleration(10.0, ctx(20.0, 10.0, v_follow=10.0), p) == 0.0


def test_ghr_needs_positive_gap():
    with pytest.raises(DomainError):
        ghr_acceleration(5.0, ctx(0.0, 5.0))


@given(st.floats(0, 30), st.floats(0, 30), st.floats(0.1, 300))
def test_ghr_sign_follows_relative_speed(v, vl, dx):
    a = ghr_acceleration(v, ctx(dx, vl, v_follow=v))
    assert math.copysign(1, a) == math.copysign(1, vl - v) or a == 0


def test_emergency_deceleration_brakes_at_least_normally():
    a = emergency_deceleration(15.0, ctx(5.0, 5.0, 0.0, v_follow=15.0), -3.0)
    assert a == pytest.approx(min(-3.0, 0.0 - 0.5 * 100 / 5))
    a = emergency_deceleration(5.0, ctx(5.0, 10.0, 1.0, v_follow=5.0), -3.0)
    assert a == pytest.approx(-3.0)


def test_emergency_with_contact_is_a_fault():
    with pytest.raises(OverlapFault):
        emergency_deceleration(10.0, ctx(0.0, 0.0), -3.0)


@given(st.floats(-10, 10), st.floats(-10, 10))
def test_compose_takes_max_then_clamps(own, lead):
    a = compose_acceleration(own, lead, DrivingState.FOLLOWING, a_max=2.5, a_floor=-9.0)
    assert a == pytest.approx(min(max(max(own, lead), -9.0), 2.5))


def test_compose_only_in_following():
    with pytest.raises(DomainError):
        compose_acceleration(1.0, 2.0, DrivingState.FREE)


def test_threshold_parameters_validated():
    with pytest.raises(ValueError):
        Thresholds(horizon_factor=0)
    with pytest.raises(ValueError):
        GhrParams(r_plus=0)
