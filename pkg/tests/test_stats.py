import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import studentized_range

from forksim.stats import (
    AnovaError,
    DegenerateFit,
    DmrtError,
    anova_from_ss,
    anova_rcbd,
    dmrt,
    duncan_range,
    f_pvalue,
    format_p,
    linear_regression,
)


# -- ANOVA -------------------------------------------------------------------

def brute_force_ss(y):
    """Sums of squares by their textbook definitions, element by element."""
    b, k = len(y), len(y[0])
    grand = math.fsum(v for row in y for v in row) / (b * k)
    row_means = [math.fsum(row) / k for row in y]
    col_means = [math.fsum(y[i][j] for i in range(b)) / b for j in range(k)]
    total = math.fsum((y[i][j] - grand) ** 2 for i in range(b) for j in range(k))
    rep = math.fsum(k * (m - grand) ** 2 for m in row_means)
    trt = math.fsum(b * (m - grand) ** 2 for m in col_means)
    err = math.fsum((y[i][j] - row_means[i] - col_means[j] + grand) ** 2 for i in range(b) for j in range(k))
    return rep, trt, err, total


def test_rcbd_matches_brute_force_on_a_small_matrix():
    y = [[3.0, 5.0, 4.0], [2.0, 6.0, 7.0], [4.0, 4.0, 9.0], [1.0, 8.0, 2.0]]
    t = anova_rcbd(y)
    rep, trt, err, total = brute_force_ss(y)
    assert t.replication.ss == pytest.approx(rep)
    assert t.treatment.ss == pytest.approx(trt)
    assert t.error.ss == pytest.approx(err)
    assert t.total.ss == pytest.approx(total)
    assert (t.replication.df, t.treatment.df, t.error.df, t.total.df) == (3, 2, 6, 11)
    assert t.treatment.f == pytest.approx((trt / 2) / (err / 6))


def test_identical_treatments_give_zero_f():
    y = np.tile(np.arange(10.0)[:, None], (1, 2))
    t = anova_rcbd(y)
    assert t.treatment.f == 0.0 and t.treatment.p == 1.0
    assert t.degenerate


def test_constant_matrix_is_degenerate_not_nan():
    t = anova_rcbd(np.full((4, 3), 7.0))
    assert t.degenerate and t.treatment.p == 1.0


def test_rcbd_rejects_incomplete_input():
    with pytest.raises(AnovaError):
        anova_rcbd([[1.0, float("nan")], [2.0, 3.0]])
    with pytest.raises(AnovaError):
        anova_rcbd([[1.0, 2.0]])


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 8), st.integers(2, 6), st.floats(-1e3, 1e3), st.floats(0.1, 10), st.integers(0, 2**31))
def test_rcbd_shift_and_scale(b, k, shift, scale, seed):
    y = np.random.default_rng(seed).normal(size=(b, k))
    t0 = anova_rcbd(y)
    t1 = anova_rcbd(y * scale + shift)
    for r0, r1 in zip(t0.rows, t1.rows):
        assert r1.ss == pytest.approx(r0.ss * scale**2, rel=1e-6, abs=1e-9)
    assert t1.treatment.f == pytest.approx(t0.treatment.f, rel=1e-6)


def test_ss_partition_adds_up():
    y = np.random.default_rng(5).normal(size=(10, 4))
    t = anova_rcbd(y)
    assert t.replication.ss + t.treatment.ss + t.error.ss == pytest.approx(t.total.ss)


def test_table_text_and_csv_schema():
    t = anova_from_ss(9, 1633.09, 1, 7.20, 9, 374.81)
    header = t.to_text().splitlines()[0].split()
    assert header == ["SOV", "DF", "SS", "MS", "F", "alpha_F"]
    csv_lines = t.to_csv({"Treatment": "tau_o vs tau_s"}).splitlines()
    assert csv_lines[0] == "SOV,DF,SS,MS,F,alpha_F"
    assert csv_lines[2].startswith("tau_o vs tau_s,1,7.20,7.20,0.17,")


@pytest.mark.parametrize("f,df1,df2", [(0.17, 1, 9), (5.63, 9, 27), (23.47, 3, 27), (1.0, 2, 5), (0.5, 10, 40)])
def test_f_pvalue_matches_mpmath(f, df1, df2):
    mpmath.mp.dps = 40
    a, b = mpmath.mpf(df2) / 2, mpmath.mpf(df1) / 2
    x = mpmath.mpf(df2) / (df2 + df1 * mpmath.mpf(f))
    exact = mpmath.betainc(a, b, 0, x, regularized=True)
    assert f_pvalue(f, df1, df2) == pytest.approx(float(exact), rel=1e-10)


@given(st.floats(0, 100), st.floats(0, 100), st.integers(1, 30), st.integers(1, 60))
def test_f_pvalue_monotone_decreasing(f1, f2, df1, df2):
    lo, hi = sorted((f1, f2))
    assert f_pvalue(hi, df1, df2) <= f_pvalue(lo, df1, df2) + 1e-12


def test_f_pvalue_edges():
    assert f_pvalue(0.0, 3, 27) == 1.0
    assert f_pvalue(math.inf, 3, 27) == 0.0
    with pytest.raises(AnovaError):
        f_pvalue(-1.0, 1, 1)
    with pytest.raises(AnovaError):
        f_pvalue(1.0, 0, 1)


def test_format_p():
    assert format_p(0.00001) == "< 0.0001"
    assert format_p(0.68976) == "0.6898"
    assert format_p(None) == ""


# -- DMRT --------------------------------------------------------------------

def test_duncan_range_matches_studentized_range_definition():
    # Duncan's protection level (1 - alpha)^(p - 1)
    for p, df in [(2, 27), (3, 10), (4, 60)]:
        q = studentized_range.ppf(0.95 ** (p - 1), p, df)
        assert duncan_range(p, df) == pytest.approx(q, abs=6e-4)


def test_duncan_range_known_values():
    # classic tabulated values at alpha = 0.05
    assert duncan_range(2, 10) == pytest.approx(3.151, abs=2e-3)
    assert duncan_range(2, 120) == pytest.approx(2.800, abs=2e-3)
    assert duncan_range(3, 20) == pytest.approx(3.097, abs=2e-3)


def test_duncan_range_nondecreasing_in_p():
    for df in (1, 5, 27, 120):
        vals = [duncan_range(p, df) for p in range(2, 21)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_duncan_range_limits():
    assert duncan_range(3, 500) == duncan_range(3, 120)
    with pytest.raises(DmrtError):
        duncan_range(21, 10)
    with pytest.raises(DmrtError):
        duncan_range(2, 0)
    with pytest.raises(DmrtError):
        duncan_range(2, 10, alpha=0.01)


def test_dmrt_example_groups():
    g = dmrt({"a": 10.0, "b": 10.1, "c": 20.0}, 0.04, 27, 10)
    assert g.letters == {"a": "A", "b": "A", "c": "B"}
    assert g.n_groups == 2
    assert g.same_group("a", "b") and not g.same_group("a", "c")


def test_dmrt_two_groups_and_one_group():
    assert dmrt([5.0, 50.0], 1.0, 9, 10).n_groups == 2
    assert dmrt([5.0, 5.0, 5.0], 1.0, 18, 10).n_groups == 1


def test_dmrt_overlapping_groups():
    # middle mean is close to both ends, ends are far apart
    se = math.sqrt(1.0 / 10)
    r2, r3 = duncan_range(2, 27) * se, duncan_range(3, 27) * se
    g = dmrt({"lo": 0.0, "mid": 0.9 * r2, "hi": 1.8 * r2}, 1.0, 27, 10)
    assert 1.8 * r2 >= r3
    assert g.letters == {"lo": "A", "mid": "AB", "hi": "B"}


def test_dmrt_zero_error_variance():
    g = dmrt([1.0, 1.0, 2.0], 0.0, 6, 3)
    assert g.letters[0] == g.letters[1] != g.letters[2]


def test_dmrt_input_validation():
    with pytest.raises(DmrtError):
        dmrt([1.0], 1.0, 9, 10)
    with pytest.raises(DmrtError):
        dmrt([1.0, 2.0], -1.0, 9, 10)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=2, max_size=8), st.floats(0.01, 50), st.integers(0, 10**6))
def test_dmrt_relabel_invariance(means, ms_err, seed):
    labels = [f"t{k}" for k in range(len(means))]
    g1 = dmrt(dict(zip(labels, means)), ms_err, 27, 10)
    perm = np.random.default_rng(seed).permutation(len(means))
    g2 = dmrt({labels[p]: means[p] for p in perm}, ms_err, 27, 10)
    for a in labels:
        for b in labels:
            assert g1.same_group(a, b) == g2.same_group(a, b)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=2, max_size=8), st.floats(0.01, 50))
def test_dmrt_every_treatment_has_a_letter(means, ms_err):
    g = dmrt(means, ms_err, 27, 10)
    assert all(g.letters[k] for k in range(len(means)))
    # sharing a letter never spans a significant pair
    srt = [m for _, m in g.sorted_means]
    for letter, members in g.groups().items():
        vals = [means[t] for t in members]
        span = len([m for m in srt if min(vals) <= m <= max(vals)])
        assert max(vals) - min(vals) < g.critical_ranges[max(span, 2)] or max(vals) == min(vals)


def test_dmrt_csv_has_units():
    g = dmrt({"ID0": 80.0, "ID1": 60.0}, 4.0, 27, 10)
    lines = g.to_csv("s").splitlines()
    assert lines[0] == "treatment,mean (s),group"
    assert lines[1].startswith("ID1,60.0000,")


# -- regression --------------------------------------------------------------

def test_regression_exact_line():
    f = linear_regression([0, 1, 2], [1, 3, 5])
    assert (f.slope, f.intercept, f.r_squared) == (2.0, 1.0, 1.0)
    assert f.equation("Δ", "V") == "Δ = 2.00·V + 1.00 (R²=1.00)"


def test_regression_caption_format():
    f = linear_regression([0, 100], [72.64, 72.64 + 103.0])
    assert f.equation("Δ", "V") == "Δ = 1.03·V + 72.64 (R²=1.00)"
    f = linear_regression([0, 100], [26.93, 11.93])
    assert f.equation("Σ", "V") == "Σ = -0.15·V + 26.93 (R²=1.00)"


def test_regression_constant_y():
    f = linear_regression([1, 2, 3], [4, 4, 4])
    assert f.slope == 0.0 and f.r_squared == 0.0 and f.zero_variance


def test_regression_degenerate_inputs():
    with pytest.raises(DegenerateFit):
        linear_regression([1.0], [2.0])
    with pytest.raises(DegenerateFit):
        linear_regression([1.0, 1.0], [2.0, 3.0])
    with pytest.raises(DegenerateFit):
        linear_regression([1.0, 2.0], [2.0, float("nan")])


@given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=3, max_size=30),
       st.floats(0.1, 100), st.floats(0.1, 100))
def test_regression_scale_equivariance(points, cx, cy):
    xs, ys = zip(*points)
    if np.ptp(xs) < 1e-3:
        return
    f = linear_regression(xs, ys)
    g = linear_regression([cx * x for x in xs], [cy * y for y in ys])
    assert g.slope == pytest.approx(f.slope * cy / cx, rel=1e-6, abs=1e-6)
    assert g.intercept == pytest.approx(f.intercept * cy, rel=1e-6, abs=1e-5)
    if not f.zero_variance and not g.zero_variance:
        assert g.r_squared == pytest.approx(f.r_squared, abs=1e-6)


def test_dmrt_gate_on_nonsignificant_anova():
    g = dmrt({"a": 0.0, "b": 100.0}, 1.0, 9, 10, anova_p=0.2)
    assert g.letters == {"a": "A", "b": "A"}
    g = dmrt({"a": 0.0, "b": 100.0}, 1.0, 9, 10, anova_p=0.001)
    assert g.n_groups == 2


def test_regression_symmetric_points():
    f = linear_regression([0, 1, 2], [0, 1, 0])
    assert f.slope == pytest.approx(0.0, abs=1e-15)
    assert f.intercept == pytest.approx(1 / 3)
    assert f.r_squared == pytest.approx(0.0, abs=1e-12)
