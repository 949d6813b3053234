"""Per-vehicle and per-replication traffic metrics.

Internal units are SI (seconds, metres, m/s). Conversion of mean speed to
km/h happens only when reports are rendered (:func:`to_kmh`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

STOP_SPEED = 0.1  # m/s; a literal 0 km/h is never reached by the dynamics
MS_TO_KMH = 3.6


class MetricError(ValueError):
    """A metric is undefined for the given record."""


@dataclass(frozen=True)
class TrajectoryRecord:
    """One completed traversal of the measurement zone.

    ``entry_s`` and ``exit_s`` are the simulation times at which the
    vehicle entered and left the zone.
    """

    id: int
    vclass: str
    route: int
    entry_s: float
    exit_s: float
    stopped_s: float
    dist_m: float
    zone_s: float

    @property
    def time_in_zone(self):
        return self.zone_s

    @property
    def distance_in_zone(self):
        return self.dist_m


@dataclass(frozen=True)
class VehicleMetrics:
    """Travel time ``tau``, stopped (delay) time ``delta`` and mean speed ``sigma``."""

    tau: float
    delta: float
    sigma: float

    def __post_init__(self):
        if not self.tau > 0:
            raise MetricError("tau must be > 0")
        if not 0 <= self.delta <= self.tau + 1e-9:
            raise MetricError("delta must lie in [0, tau]")
        if not self.sigma >= 0:
            raise MetricError("sigma must be >= 0")

    @classmethod
    def from_record(cls, record):
        return cls(record.zone_s, delay_time(record), mean_speed(record))


def stopped_time(speeds, dt, v_stop=STOP_SPEED):
    """Time spent below ``v_stop`` for speeds sampled every ``dt`` seconds.

    >>> stopped_time([0, 0, 5, 0], 1.0)
    3.0
    """
    v = np.asarray(speeds, dtype=float)
    return float(np.count_nonzero(v < v_stop)) * dt


def delay_time(record):
    """Stopped time accumulated inside the zone, clipped to the zone time."""
    return min(float(record.stopped_s), float(record.zone_s))


def mean_speed(record):
    """Space-mean speed over the vehicle's own traversal, stops included.

    Raises:
        MetricError: if the vehicle spent no time in the zone.
    """
    if not record.zone_s > 0:
        raise MetricError("mean speed undefined: time in zone is 0")
    return float(record.dist_m) / float(record.zone_s)


def to_kmh(speed_ms):
    return speed_ms * MS_TO_KMH


@dataclass(frozen=True)
class Aggregate:
    """Replication means over completed records.

    ``empty`` is set when no vehicle completed the zone; the means are then NaN.
    """

    mean_tau: float
    mean_delta: float
    mean_sigma: float
    n: int
    censored: int = 0

    @property
    def empty(self):
        return self.n == 0

    @property
    def mean_sigma_kmh(self):
        return to_kmh(self.mean_sigma)


def aggregate(records, censored=0):
    """Arithmetic means of tau, delta and sigma over ``records``."""
    records = list(records)
    if not records:
        return Aggregate(math.nan, math.nan, math.nan, 0, censored)
    tau = np.array([r.zone_s for r in records], dtype=float)
    delta = np.array([delay_time(r) for r in records], dtype=float)
    sigma = np.array([mean_speed(r) for r in records], dtype=float)
    return Aggregate(float(tau.mean()), float(delta.mean()), float(sigma.mean()), len(records), censored)
