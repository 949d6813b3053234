"""Vehicle generation: Poisson arrivals per route, class mix, desired speeds."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import ClassName, check_shares, default_classes

ROUTE_IDS = (1, 2, 3, 4, 5, 6)
OBSERVED_ROUTE_COUNTS = (778, 719, 524, 934, 815, 156)
# The observed counts were pooled over peak and non-peak sessions of unstated
# total length; two hours keeps the base volume below the single-lane
# circle's capacity so that added volume shows up as added delay.
DEFAULT_HORIZON = 7200.0
MIN_DESIRED_SPEED = 2.0


@dataclass(frozen=True)
class DemandTable:
    """Observed vehicles per route over ``horizon`` seconds plus the class mix.

    ``class_shares`` follows the canonical class order of
    :func:`forksim.core.default_classes`.
    """

    route_counts: tuple[float, ...] = OBSERVED_ROUTE_COUNTS
    class_shares: tuple[float, ...] = tuple(c.share for c in default_classes())
    horizon: float = DEFAULT_HORIZON

    def __post_init__(self):
        if len(self.route_counts) != len(ROUTE_IDS):
            raise ValueError("need one count per route")
        if any(c < 0 for c in self.route_counts):
            raise ValueError("route counts must be >= 0")
        if not self.horizon > 0:
            raise ValueError("demand horizon must be > 0")
        if abs(sum(self.class_shares) - 1.0) > 1e-9:
            raise ValueError("class shares must sum to 1")

    @property
    def total(self):
        return sum(self.route_counts)

    def rates(self):
        """Arrivals per second for each route."""
        return tuple(c / self.horizon for c in self.route_counts)

    def route_shares(self):
        total = self.total
        return tuple(c / total for c in self.route_counts) if total else tuple(0.0 for _ in self.route_counts)


@dataclass(frozen=True)
class Arrival:
    time: float
    route: int
    vclass: ClassName
    v_initial: float


def scale_volume(table, multiplier):
    if multiplier < 0:
        raise ValueError("volume multiplier must be ≥ 0")
    return replace(table, route_counts=tuple(c * multiplier for c in table.route_counts))


def sample_vehicle_class(u, shares=None, names=None):
    """Inverse-CDF draw over the class listing order for a uniform ``u`` in [0, 1)."""
    if shares is None:
        shares = [c.share for c in default_classes()]
    if names is None:
        names = [c.name for c in default_classes()]
    cum = 0.0
    for name, share in zip(names, shares):
        cum += share
        if u < cum:
            return name
    return names[-1]


def _class_indices(u, shares):
    cum = np.cumsum(np.asarray(shares, dtype=float))
    idx = np.searchsorted(cum, u, side="right")
    return np.minimum(idx, len(cum) - 1)


def _truncated_normal(rng, mean, sd, low, high, n):
    if n == 0:
        return np.empty(0)
    if sd == 0 or high - low < 1e-12:
        return np.full(n, min(max(mean, low), high))
    out = rng.normal(mean, sd, n)
    bad = (out < low) | (out > high)
    for _ in range(1000):
        k = int(bad.sum())
        if k == 0:
            break
        out[bad] = rng.normal(mean, sd, k)
        bad = (out < low) | (out > high)
    # pathological truncation windows fall back to clipping
    return np.clip(out, low, high)


def arrival_schedule(table, duration, multiplier, rng, classes=None, legal_speed=40 / 3.6):
    """Merged arrival list over ``[0, duration)``, sorted by (time, route).

    Each route is an independent Poisson stream with rate
    ``multiplier * count / horizon``. Class shares stay fixed under scaling.
    """
    if multiplier < 0:
        raise ValueError("volume multiplier must be ≥ 0")
    classes = tuple(classes) if classes is not None else default_classes()
    check_shares(classes)
    table = scale_volume(table, multiplier)
    arrivals = []
    for route, rate in zip(ROUTE_IDS, table.rates()):
        n = int(rng.poisson(rate * duration)) if rate > 0 else 0
        times = np.sort(rng.uniform(0.0, duration, n))
        kinds = _class_indices(rng.random(n), table.class_shares)
        speeds = np.empty(n)
        for k, vc in enumerate(classes):
            sel = kinds == k
            high = max(legal_speed, MIN_DESIRED_SPEED)
            speeds[sel] = _truncated_normal(
                rng, vc.desired_speed_mean, vc.desired_speed_sd, MIN_DESIRED_SPEED, high, int(sel.sum())
            )
        speeds = np.minimum(speeds, legal_speed)
        arrivals.extend(
            Arrival(float(t), route, classes[k].name, float(v)) for t, k, v in zip(times, kinds, speeds)
        )
    arrivals.sort(key=lambda a: (a.time, a.route))
    return arrivals
