"""Simple ordinary least squares fit of y on x."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DegenerateFit(ValueError):
    """The fit is undefined (fewer than two points or constant x)."""


@dataclass(frozen=True)
class RegressionFit:
    slope: float
    intercept: float
    r_squared: float
    n: int = 0
    zero_variance: bool = False

    def predict(self, x):
        return self.slope * np.asarray(x, dtype=float) + self.intercept

    def equation(self, y="y", x="x", digits=2):
        """Caption-style line, e.g. ``y = 1.03·x + 72.64 (R²=0.98)``."""
        sign = "-" if self.intercept < 0 else "+"
        return (f"{y} = {self.slope:.{digits}f}·{x} {sign} {abs(self.intercept):.{digits}f} "
                f"(R²={self.r_squared:.{digits}f})")


def linear_regression(xs, ys):
    """OLS line through ``(xs, ys)``.

    ``r_squared = 1 - ss_res / ss_tot``. When y is constant
    (``ss_tot = 0``) the fit is the horizontal line with ``r_squared = 0``
    and ``zero_variance`` set.

    Raises:
        DegenerateFit: fewer than two points, or all xs equal.

    Example:
        >>> f = linear_regression([0, 1, 2], [1, 3, 5])
        >>> f.slope, f.intercept, f.r_squared
        (2.0, 1.0, 1.0)
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DegenerateFit("xs and ys must be 1-D and of equal length")
    if x.size < 2:
        raise DegenerateFit("need at least 2 points")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DegenerateFit("non-finite input")
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx == 0.0:
        raise DegenerateFit("all x values are equal")
    yc = y - y.mean()
    slope = float(xc @ yc) / sxx
    intercept = float(y.mean() - slope * x.mean())
    ss_tot = float(yc @ yc)
    if ss_tot == 0.0:
        return RegressionFit(0.0, float(y.mean()), 0.0, int(x.size), zero_variance=True)
    resid = yc - slope * xc
    r2 = 1.0 - float(resid @ resid) / ss_tot
    return RegressionFit(slope, intercept, min(1.0, max(0.0, r2)), int(x.size))
