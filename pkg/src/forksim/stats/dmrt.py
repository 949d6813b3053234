"""Duncan's multiple range test with letter groupings."""

from __future__ import annotations

import csv
import io
import math
import string
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

SHIPPED_ALPHAS = (0.05,)
_TABLE_FILES = {0.05: "duncan_alpha05.csv"}


class DmrtError(ValueError):
    pass


@lru_cache(maxsize=None)
def _load_table(alpha):
    name = _TABLE_FILES[alpha]
    text = resources.files("forksim").joinpath("data", name).read_text(encoding="utf-8")
    rows = list(csv.reader(io.StringIO(text)))
    spans = [int(h[1:]) for h in rows[0][1:]]
    dfs = np.array([int(r[0]) for r in rows[1:]])
    vals = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return spans, dfs, vals


def duncan_range(p, df, alpha=0.05):
    """Tabulated significant studentized range for span ``p`` and error df.

    Error df above the last tabulated row use that row (slightly
    conservative); fractional df are rounded down.
    """
    alpha = _check_alpha(alpha)
    spans, dfs, vals = _load_table(alpha)
    if p < spans[0] or p > spans[-1]:
        raise DmrtError(f"span {p} outside the shipped table ({spans[0]}..{spans[-1]})")
    if df < dfs[0]:
        raise DmrtError("error degrees of freedom must be >= 1")
    row = min(int(math.floor(df)), int(dfs[-1])) - int(dfs[0])
    return float(vals[row, p - spans[0]])


def _check_alpha(alpha):
    for a in SHIPPED_ALPHAS:
        if abs(alpha - a) < 1e-12:
            return a
    raise DmrtError(f"unsupported alpha {alpha}: tables shipped for {SHIPPED_ALPHAS}")


def _letter(k):
    out = ""
    k += 1
    while k:
        k, r = divmod(k - 1, 26)
        out = string.ascii_uppercase[r] + out
    return out


@dataclass(frozen=True)
class DmrtGrouping:
    """Letter groups over treatments; shared letter means no significant difference.

    Attributes:
        letters: treatment -> letter string (e.g. ``"AB"``).
        sorted_means: ``(treatment, mean)`` pairs, smallest mean first.
        critical_ranges: span -> least significant range.
    """

    letters: dict
    sorted_means: tuple
    critical_ranges: dict

    @property
    def n_groups(self):
        return len({c for s in self.letters.values() for c in s})

    def groups(self):
        """Letter -> tuple of treatments carrying it."""
        out = {}
        for t, _ in self.sorted_means:
            for c in self.letters[t]:
                out.setdefault(c, []).append(t)
        return {c: tuple(v) for c, v in sorted(out.items())}

    def same_group(self, a, b):
        return bool(set(self.letters[a]) & set(self.letters[b]))

    def to_csv(self, unit=""):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["treatment", f"mean{f' ({unit})' if unit else ''}", "group"])
        for t, m in self.sorted_means:
            w.writerow([t, f"{m:.4f}", self.letters[t]])
        return buf.getvalue()

    def to_text(self, unit=""):
        width = max(len(str(t)) for t, _ in self.sorted_means)
        lines = [f"{str(t).ljust(width)}  {m:10.4f}{(' ' + unit) if unit else ''}  {self.letters[t]}"
                 for t, m in self.sorted_means]
        return "\n".join(lines) + "\n"


def dmrt(means, ms_err, df_err, n_per_mean, alpha=0.05, anova_p=None):
    """Group treatment means with Duncan's multiple range test.

    Args:
        means: mapping treatment -> mean, or a sequence (labelled 0..k-1).
        ms_err: error mean square from the ANOVA.
        df_err: error degrees of freedom.
        n_per_mean: observations behind each mean (replications).
        alpha: test level; only the shipped tables are supported.
        anova_p: optional treatment p-value from the preceding ANOVA. When
            given and not below ``alpha`` the test is not run and every
            treatment shares the letter ``A`` (the protected procedure).

    Means are sorted in increasing order. Two means ``p`` ranks apart
    differ significantly when their difference reaches
    ``r(p, df_err) * sqrt(ms_err / n_per_mean)``. Each maximal run of
    consecutive means with no significant difference shares a letter.
    A run is cut at its first significant pair (Duncan's protection rule).
    Letters start at ``A`` for the run holding the smallest mean.

    Example:
        >>> g = dmrt({"a": 10.0, "b": 10.1, "c": 20.0}, 0.04, 27, 10)
        >>> [g.letters[t] for t in "abc"]
        ['A', 'A', 'B']
    """
    alpha = _check_alpha(alpha)
    if not isinstance(means, dict):
        means = dict(enumerate(means))
    if len(means) < 2:
        raise DmrtError("need at least 2 treatments")
    if ms_err < 0 or math.isnan(ms_err):
        raise DmrtError("ms_err must be >= 0")
    if n_per_mean < 2:
        raise DmrtError("n_per_mean must be >= 2")
    order = sorted(means.items(), key=lambda kv: (kv[1], str(kv[0])))
    k = len(order)
    se = math.sqrt(ms_err / n_per_mean)
    ranges = {p: duncan_range(p, df_err, alpha) * se for p in range(2, k + 1)}
    vals = [m for _, m in order]
    if anova_p is not None and anova_p >= alpha:
        return DmrtGrouping({t: "A" for t, _ in order}, tuple(order), ranges)

    def significant(i, j):
        diff = vals[j] - vals[i]
        return diff > 0 and diff >= ranges[j - i + 1]

    runs = []
    for i in range(k):
        j = i
        while j + 1 < k and not significant(i, j + 1):
            j += 1
        if not runs or j > runs[-1][1]:
            runs.append((i, j))
    letters = {t: "" for t, _ in order}
    for n, (i, j) in enumerate(runs):
        for idx in range(i, j + 1):
            letters[order[idx][0]] += _letter(n)
    return DmrtGrouping(letters, tuple(order), ranges)
