"""Randomized complete block ANOVA with F-distribution p-values."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc

SOURCES = ("Replication", "Treatment", "Error", "Total")
HEADER = ("SOV", "DF", "SS", "MS", "F", "alpha_F")


class AnovaError(ValueError):
    pass


def f_pvalue(f, df1, df2):
    """Upper-tail probability P(F > f) of the F(df1, df2) distribution.

    Uses the identity ``P(F > f) = I_x(df2/2, df1/2)`` with
    ``x = df2 / (df2 + df1*f)``, where ``I`` is the regularized incomplete
    beta function. ``f = inf`` gives 0.
    """
    if df1 < 1 or df2 < 1:
        raise AnovaError("degrees of freedom must be >= 1")
    if f < 0 or math.isnan(f):
        raise AnovaError("F must be >= 0")
    if f == 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    x = df2 / (df2 + df1 * f)
    return float(betainc(df2 / 2.0, df1 / 2.0, x))


def format_p(p):
    """Four-decimal p-value; anything below 1e-4 prints as ``< 0.0001``."""
    if p is None:
        return ""
    if p < 1e-4:
        return "< 0.0001"
    return f"{p:.4f}"


@dataclass(frozen=True)
class AnovaRow:
    source: str
    df: int
    ss: float
    ms: float | None
    f: float | None = None
    p: float | None = None

    @property
    def f_infinite(self):
        return self.f is not None and math.isinf(self.f)


@dataclass(frozen=True)
class AnovaTable:
    """Replication / Treatment / Error / Total decomposition.

    ``degenerate`` is set when the error mean square is zero: F is then
    reported as infinite (or 0 with p = 1 when the effect is zero too) instead of
    dividing silently.
    """

    rows: tuple[AnovaRow, ...]
    degenerate: bool = False

    def row(self, source):
        for r in self.rows:
            if r.source.lower() == source.lower():
                return r
        raise KeyError(source)

    @property
    def treatment(self):
        return self.row("Treatment")

    @property
    def replication(self):
        return self.row("Replication")

    @property
    def error(self):
        return self.row("Error")

    @property
    def total(self):
        return self.row("Total")

    def _cells(self):
        out = []
        for r in self.rows:
            out.append((
                r.source,
                str(r.df),
                f"{r.ss:.2f}",
                "" if r.ms is None else f"{r.ms:.2f}",
                "" if r.f is None else ("inf" if r.f_infinite else f"{r.f:.2f}"),
                format_p(r.p),
            ))
        return out

    def to_text(self, labels=None):
        """Aligned plain-text table in SOV/DF/SS/MS/F/alpha_F layout."""
        cells = self._cells()
        if labels:
            cells = [(labels.get(c[0], c[0]),) + c[1:] for c in cells]
        widths = [max(len(h), *(len(c[k]) for c in cells)) for k, h in enumerate(HEADER)]
        lines = ["  ".join(h.ljust(w) if k == 0 else h.rjust(w) for k, (h, w) in enumerate(zip(HEADER, widths)))]
        lines.append("-" * len(lines[0]))
        for c in cells:
            lines.append("  ".join(v.ljust(w) if k == 0 else v.rjust(w) for k, (v, w) in enumerate(zip(c, widths))))
        return "\n".join(lines) + "\n"

    def to_csv(self, labels=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HEADER)
        for c in self._cells():
            if labels:
                c = (labels.get(c[0], c[0]),) + c[1:]
            w.writerow(c)
        return buf.getvalue()


def _f_and_p(ms_effect, ms_err, df_effect, df_err):
    if ms_err > 0:
        f = ms_effect / ms_err
        return f, f_pvalue(f, df_effect, df_err)
    if ms_effect > 0:
        return math.inf, 0.0
    # no effect and no error: nothing distinguishes the groups
    return 0.0, 1.0


def anova_from_ss(df_rep, ss_rep, df_trt, ss_trt, df_err, ss_err):
    """Build the table from a given DF/SS decomposition."""
    ms_rep = ss_rep / df_rep
    ms_trt = ss_trt / df_trt
    ms_err = ss_err / df_err if df_err > 0 else 0.0
    f_rep, p_rep = _f_and_p(ms_rep, ms_err, df_rep, df_err)
    f_trt, p_trt = _f_and_p(ms_trt, ms_err, df_trt, df_err)
    rows = (
        AnovaRow("Replication", df_rep, ss_rep, ms_rep, f_rep, p_rep),
        AnovaRow("Treatment", df_trt, ss_trt, ms_trt, f_trt, p_trt),
        AnovaRow("Error", df_err, ss_err, ms_err),
        AnovaRow("Total", df_rep + df_trt + df_err, ss_rep + ss_trt + ss_err, None),
    )
    return AnovaTable(rows, degenerate=not ms_err > 0)


def anova_rcbd(data):
    """RCBD ANOVA of a complete ``blocks x treatments`` matrix.

    Blocks are replications; columns are treatments.

    Example:
        >>> t = anova_rcbd([[1, 3], [2, 3]])
        >>> round(t.treatment.ss, 2), round(t.treatment.f, 2)
        (2.25, 9.0)
    """
    y = np.asarray(data, dtype=float)
    if y.ndim != 2:
        raise AnovaError("data must be a blocks x treatments matrix")
    b, k = y.shape
    if b < 2 or k < 2:
        raise AnovaError("need >= 2 blocks and >= 2 treatments")
    if not np.all(np.isfinite(y)):
        raise AnovaError("matrix must be complete (no NaN or inf cells)")
    # centre first: SS are shift-invariant and this keeps round-off small
    y = y - y.mean()
    grand = y.mean()
    ss_total = float(((y - grand) ** 2).sum())
    ss_rep = float(k * ((y.mean(axis=1) - grand) ** 2).sum())
    ss_trt = float(b * ((y.mean(axis=0) - grand) ** 2).sum())
    resid = y - y.mean(axis=1, keepdims=True) - y.mean(axis=0, keepdims=True) + grand
    ss_err = float((resid ** 2).sum())
    # components that are pure round-off relative to the total are zero
    tiny = 1e-24 * ss_total
    ss_rep, ss_trt, ss_err = (0.0 if v <= tiny else v for v in (ss_rep, ss_trt, ss_err))
    table = anova_from_ss(b - 1, ss_rep, k - 1, ss_trt, (b - 1) * (k - 1), ss_err)
    if ss_total == 0.0:
        return AnovaTable(table.rows, degenerate=True)
    return table
