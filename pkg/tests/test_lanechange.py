import pytest
from hypothesis import given
from hypothesis import strategies as st

from forksim.core import KinematicState, VehicleAgent, default_classes
from forksim.lanechange import (
    STAY,
    Action,
    LaneChangeDecision,
    LaneChangeParams,
    Neighborhood,
    Reason,
    SideNeighbors,
    evaluate_lane_change,
    execute_lane_change,
)

CAR = default_classes()[5]


def agent(v=10.0, lane=0, x=50.0):
    return VehicleAgent(1, CAR, 1, KinematicState(x, lane, v), 11.0, "pnr_in")


def test_route_required_move_when_gaps_accept():
    nb = Neighborhood(current_leader_v=10.0, left=SideNeighbors(lead_gap=20.0, lead_v=10.0,
                                                                lag_gap=20.0, lag_v=10.0))
    d = evaluate_lane_change(agent(), nb, route_need=1, dist_to_end=50.0)
    assert d == LaneChangeDecision(Action.MOVE_LEFT, Reason.ROUTE_REQUIRED)


def test_route_required_blocked_by_small_lag_gap():
    # lag gap must be >= v_lag * 1 s + 2 m = 12 m
    nb = Neighborhood(left=SideNeighbors(lag_gap=11.9, lag_v=10.0))
    assert evaluate_lane_change(agent(), nb, route_need=1, dist_to_end=50.0) == STAY
    nb = Neighborhood(left=SideNeighbors(lag_gap=12.0, lag_v=10.0))
    assert evaluate_lane_change(agent(), nb, route_need=1, dist_to_end=50.0).action == Action.MOVE_LEFT


def test_route_required_blocked_by_small_lead_gap():
    # lead gap must be >= v * 1 s
    nb = Neighborhood(right=SideNeighbors(lead_gap=9.9, lead_v=10.0))
    assert evaluate_lane_change(agent(lane=1), nb, route_need=-1, dist_to_end=10.0) == STAY


def test_speed_gain_needs_one_metre_per_second():
    left = SideNeighbors(lead_gap=50.0, lead_v=6.9)
    nb = Neighborhood(current_leader_v=6.0, left=left)
    assert evaluate_lane_change(agent(v=6.0), nb) == STAY
    nb = Neighborhood(current_leader_v=5.0, left=left)
    d = evaluate_lane_change(agent(v=6.0), nb)
    assert d == LaneChangeDecision(Action.MOVE_LEFT, Reason.SPEED_GAIN)


def test_no_leader_no_discretionary_change():
    nb = Neighborhood(current_leader_v=None, left=SideNeighbors())
    assert evaluate_lane_change(agent(), nb) == STAY


def test_mandatory_change_waits_outside_window():
    nb = Neighborhood(left=SideNeighbors())
    assert evaluate_lane_change(agent(), nb, route_need=1, dist_to_end=500.0) == STAY


def test_missing_lane_never_chosen():
    nb = Neighborhood(current_leader_v=1.0, left=None, right=None)
    assert evaluate_lane_change(agent(), nb, route_need=1, dist_to_end=10.0) == STAY
    assert evaluate_lane_change(agent(), nb) == STAY


def test_execute_keeps_position_and_changes_lane():
    a, d = execute_lane_change(agent(lane=0), LaneChangeDecision(Action.MOVE_LEFT, Reason.SPEED_GAIN), 2)
    assert a.kinematics.lane == 1 and a.kinematics.x == 50.0
    assert d.action == Action.MOVE_LEFT


def test_execute_voids_move_that_would_overlap():
    a = agent(lane=0)
    move = LaneChangeDecision(Action.MOVE_LEFT, Reason.SPEED_GAIN)
    out, d = execute_lane_change(a, move, 2, target_occupants=[(52.0, 4.5)])
    assert d == STAY and out.kinematics.lane == 0


def test_execute_rejects_missing_lane_and_stay():
    with pytest.raises(ValueError):
        execute_lane_change(agent(lane=1), LaneChangeDecision(Action.MOVE_LEFT, Reason.SPEED_GAIN), 2)
    with pytest.raises(ValueError):
        execute_lane_change(agent(), STAY, 2)


@given(st.floats(0, 20), st.floats(0, 100), st.floats(0, 20), st.floats(0, 100), st.floats(0, 20))
def test_accepted_moves_always_satisfy_gap_rule(v, lead_gap, lead_v, lag_gap, lag_v):
    p = LaneChangeParams()
    nb = Neighborhood(current_leader_v=0.0, left=SideNeighbors(lead_gap, lead_v, lag_gap, lag_v))
    d = evaluate_lane_change(agent(v=v), nb, route_need=1, dist_to_end=10.0, params=p)
    if d.action != Action.STAY:
        assert lead_gap >= v * p.lead_headway
        assert lag_gap >= lag_v * p.lag_headway + p.lag_buffer


def test_params_validated():
    with pytest.raises(ValueError):
        LaneChangeParams(lag_buffer=-1)
