"""Domain types shared by every module.

Units are SI throughout: meters, seconds, m/s, m/s^2. Speeds are only
converted to km/h at the presentation layer.

Sign convention: ``a_normal`` (normal deceleration) is stored as a
negative number, so ``min(a_normal, x)`` selects the stronger braking.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

SHARE_TOLERANCE = 1e-9


class OverlapFault(RuntimeError):
    """Two vehicles occupy the same road space; the replication must abort."""

    def __init__(self, message, *, seed=None, step=None, pair=None):
        super().__init__(message)
        self.seed = seed
        self.step = step
        self.pair = pair


class ClassName(str, enum.Enum):
    MOTORCYCLE = "motorcycle"
    WHEELER_4X8 = "wheeler4x8"
    WHEELER_4X6 = "wheeler4x6"
    VAN = "van"
    JEEPNEY = "jeepney"
    CAR = "car"
    BUS = "bus"
    BICYCLE = "bicycle"


class DrivingState(enum.IntEnum):
    FREE = 0
    FOLLOWING = 1
    EMERGENCY = 2


@dataclass(frozen=True)
class VehicleClass:
    name: ClassName
    length: float
    width: float
    effective_length: float
    a_max: float
    a_normal: float
    desired_speed_mean: float
    desired_speed_sd: float
    share: float
    reaction_time: float = 1.0

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError(f"{self.name.value}: length must be > 0")
        if not self.width > 0:
            raise ValueError(f"{self.name.value}: width must be > 0")
        if not self.effective_length >= self.length:
            raise ValueError(f"{self.name.value}: effective length must be >= length")
        if not self.a_max > 0:
            raise ValueError(f"{self.name.value}: a_max must be > 0")
        if not self.a_normal < 0:
            raise ValueError(f"{self.name.value}: a_normal must be < 0")
        if not self.desired_speed_mean > 0:
            raise ValueError(f"{self.name.value}: desired speed mean must be > 0")
        if not self.desired_speed_sd >= 0:
            raise ValueError(f"{self.name.value}: desired speed sd must be >= 0")
        if not 0.0 <= self.share <= 1.0:
            raise ValueError(f"{self.name.value}: share must be in [0, 1]")
        if not self.reaction_time > 0:
            raise ValueError(f"{self.name.value}: reaction time must be > 0")

    @property
    def standstill_buffer(self):
        return self.effective_length - self.length


STANDSTILL_BUFFER = 1.0

# name, length, width, share, a_max, a_normal, desired mean, desired sd
_CLASS_TABLE = [
    (ClassName.MOTORCYCLE, 2.00, 1.5, 0.3830, 3.0, -3.5, 10.5, 1.0),
    (ClassName.WHEELER_4X8, 6.59, 1.5, 0.0064, 1.2, -2.0, 8.5, 1.0),
    (ClassName.WHEELER_4X6, 5.41, 1.5, 0.0275, 1.2, -2.0, 9.0, 1.0),
    (ClassName.VAN, 5.50, 1.5, 0.0588, 2.0, -3.0, 10.0, 1.0),
    (ClassName.JEEPNEY, 4.00, 1.5, 0.0960, 1.8, -2.5, 9.5, 1.0),
    (ClassName.CAR, 4.50, 1.5, 0.3173, 2.5, -3.0, 10.0, 1.0),
    (ClassName.BUS, 11.54, 2.5, 0.0038, 1.2, -2.0, 8.5, 1.0),
    (ClassName.BICYCLE, 1.45, 0.5, 0.1072, 1.0, -1.5, 4.5, 1.0),
]


def default_classes():
    """The eight observed vehicle types, in their canonical listing order."""
    return tuple(
        VehicleClass(
            name=name,
            length=length,
            width=width,
            effective_length=length + STANDSTILL_BUFFER,
            a_max=a_max,
            a_normal=a_normal,
            desired_speed_mean=mean,
            desired_speed_sd=sd,
            share=share,
        )
        for name, length, width, share, a_max, a_normal, mean, sd in _CLASS_TABLE
    )


def check_shares(classes):
    total = sum(c.share for c in classes)
    if abs(total - 1.0) > SHARE_TOLERANCE:
        raise ValueError(f"class shares must sum to 1 (got {total:.12g})")
    names = [c.name for c in classes]
    if len(set(names)) != len(names):
        raise ValueError("duplicate vehicle class")


@dataclass(frozen=True)
class KinematicState:
    x: float
    lane: int
    v: float
    a: float = 0.0

    def __post_init__(self):
        if self.v < 0:
            raise ValueError("speed must be >= 0")


@dataclass(frozen=True)
class LeaderContext:
    """What a follower perceives of the vehicle (or stop line) ahead."""

    delta_x: float
    delta_v: float
    leader_v: float
    leader_a: float
    leader_length: float


@dataclass
class VehicleAgent:
    id: int
    vclass: VehicleClass
    route: int
    kinematics: KinematicState
    v_desired: float
    link: str = ""
    driving_state: DrivingState = DrivingState.FREE
    entry_time: float = 0.0
    stopped_time: float = 0.0
    distance: float = 0.0
    time_in_zone: float = 0.0

    @property
    def reaction_time(self):
        return self.vclass.reaction_time

    def moved(self, **changes):
        return replace(self, kinematics=replace(self.kinematics, **changes))


@dataclass
class SimClock:
    dt: float
    t: float = 0.0
    steps: int = field(default=0)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")

    def tick(self):
        self.steps += 1
        # multiply rather than accumulate so t has no drift
        self.t = self.steps * self.dt


def effective_gap(x_lead, length_lead, x_follow):
    """Bumper-to-bumper gap from the follower's front to the leader's rear.

    Positions are front-bumper coordinates along the lane. Raises
    :class:`OverlapFault` when the bodies overlap.
    """
    gap = x_lead - length_lead - x_follow
    if gap < 0:
        raise OverlapFault(
            f"overlap: leader front {x_lead} length {length_lead} vs follower front {x_follow}"
        )
    return gap
