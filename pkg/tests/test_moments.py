import math

import numpy as np
import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st
from scipy.special import comb, gammaln

from occupancy_lab import FrequencySpec, build_frequencies
from occupancy_lab.moments import (DegenerateVarianceError, binomial_mean, c_floor, corr_matrix,
                                   covariance, moment_table, occupied_variance, phi, phi_occupied,
                                   variance, variance_identity)

from conftest import FAMILY_SPECS, view_of

E = math.e
C2 = 6 / math.pi**2


def brute_probs(name, n=4_000_000):
    return view_of(name).probs(1, n + 1)


def brute_phi(p, r, t):
    x = t * p[p > 0]
    return float(np.sum(np.exp(-x + r * np.log(x) - gammaln(r + 1))))


def brute_cov(p, r, s, t):
    x = t * p
    a = np.exp(-x + r * np.log(x) - gammaln(r + 1))
    b = np.exp(-x + s * np.log(x) - gammaln(s + 1))
    return -float(np.sum(a * b))


# --- worked examples ---------------------------------------------------------

def test_single_box_values():
    one = build_frequencies(FrequencySpec.explicit([1.0]))
    assert phi(one, 1, 1.0).value == pytest.approx(math.exp(-1), rel=1e-14)
    assert phi_occupied(one, 1.0).value == pytest.approx(1 - math.exp(-1), rel=1e-14)
    assert variance(one, 1, 1.0).value == pytest.approx(math.exp(-1) * (1 - math.exp(-1)), rel=1e-13)
    assert variance(one, 1, 1.0).value == pytest.approx(0.2325442, abs=1e-7)
    c = covariance(one, 1, 2, 1.0).value
    assert c == pytest.approx(-math.exp(-2) / 2, rel=1e-13)
    assert c == pytest.approx(-0.0676676, abs=1e-7)
    assert covariance(one, 2, 1, 1.0).value == c
    assert phi(one, 3, 2.0).value * -(3 / 8) == pytest.approx(c, rel=1e-13)


def test_two_boxes_all_occupied():
    two = build_frequencies(FrequencySpec.explicit([0.5, 0.5]))
    assert phi_occupied(two, 1e6).value == pytest.approx(2.0, abs=1e-12)


@pytest.mark.parametrize("name", sorted(FAMILY_SPECS))
def test_zero_time(name):
    v = view_of(name)
    assert phi(v, 1, 0.0).value == 0.0
    assert variance(v, 1, 0.0).value == 0.0


def test_geometric_golden_against_direct_sum():
    j = np.arange(1, 80)
    x = 4.0 * 0.5**j
    direct = math.fsum(x * np.exp(-x))
    got = phi(view_of("geometric"), 1, 4.0, tol=1e-14)
    assert got.value == pytest.approx(direct, abs=1e-13)
    assert got.value == pytest.approx(1.366756149532368, abs=1e-12)  # frozen from the direct sum
    v = variance(view_of("geometric"), 1, 4.0, tol=1e-13)
    assert v.value > (1 - math.exp(-1)) * got.value
    direct_v = math.fsum(x * np.exp(-x) * (1 - x * np.exp(-x)))
    assert abs(v.value - direct_v) <= v.cert + 1e-13


def test_power_law_phi1_large_t_against_closed_form():
    t = 1e8
    val = phi(view_of("power_law"), 1, t).value
    assert val == pytest.approx(math.sqrt(math.pi) / 2 * math.sqrt(C2 * t), rel=2e-3)


@pytest.mark.parametrize("name,t", [("power_law", 100.0), ("stretched_exp", 1e3), ("poisson_weights", 50.0)])
@pytest.mark.parametrize("r", [2, 3, 5])
def test_phi_against_brute_force(name, t, r):
    p = brute_probs(name)
    got = phi(view_of(name), r, t, tol=1e-12)
    assert abs(got.value - brute_phi(p, r, t)) <= got.cert + 1e-10


def test_phi1_power_law_with_integral_remainder():
    n = 4_000_000
    p = brute_probs("power_law", n)
    t = 100.0
    # beyond n the terms are t p (1 - t p + ...), with t p < 4e-12
    rest = t * C2 / (n + 0.5)
    assert phi(view_of("power_law"), 1, t).value == pytest.approx(brute_phi(p, 1, t) + rest, abs=1e-9)


def test_power_law_covariance_golden():
    p = brute_probs("power_law")
    got = covariance(view_of("power_law"), 1, 2, 100.0, tol=1e-12)
    oracle = brute_cov(p, 1, 2, 100.0)
    assert got.value < 0
    assert got.value == pytest.approx(oracle, abs=1e-9)


@pytest.mark.parametrize("name", ["geometric", "power_law", "stretched_exp", "bgy_ex2", "factorial"])
@pytest.mark.parametrize("r", [1, 2, 4])
def test_variance_forms_agree(name, r):
    for t in (3.0, 1e3, 1e6):
        a = variance(view_of(name), r, t)
        b = variance_identity(view_of(name), r, t)
        assert abs(a.value - b.value) <= a.cert + b.cert + 1e-12 + 1e-14 * abs(a.value)


def test_corr_matrix_diagonal_and_floor():
    cm = corr_matrix(view_of("power_law"), (1, 2), 100.0)
    assert np.all(np.diag(cm.matrix) == 1.0)
    q2 = 1 - math.exp(-1) * 2.5
    assert q2 == pytest.approx(0.080301, abs=1e-6)
    assert cm.eigmin >= q2
    eig = np.linalg.eigvalsh(cm.matrix)
    assert cm.eigmin == pytest.approx(eig.min(), abs=1e-12)


def test_single_block_closed_form():
    m = 400
    view = build_frequencies(FrequencySpec.explicit([1 / m] * m))
    fi = 1.0
    cm = corr_matrix(view, (1, 2), fi * m)
    pr = math.exp(-fi) * fi
    ps = math.exp(-fi) * fi**2 / 2
    closed = -math.sqrt(pr * ps / ((1 - pr) * (1 - ps)))
    assert cm.matrix[0, 1] == pytest.approx(closed, rel=1e-12)


def test_degenerate_variance_raises():
    one = build_frequencies(FrequencySpec.explicit([1.0]))
    with pytest.raises(DegenerateVarianceError) as info:
        corr_matrix(one, (1, 2), 1e-9)
    assert info.value.r == 2


def test_c_floor_values():
    assert c_floor((1,)) == pytest.approx(1 - 2 / E, rel=1e-12)
    assert c_floor((1, 2)) == pytest.approx(1 - 2.5 / E, rel=1e-12)
    assert c_floor((1, 2, 3, 4, 5, 6)) < c_floor((1, 2))


def test_binomial_mean_examples():
    half = build_frequencies(FrequencySpec.explicit([0.5, 0.5]))
    assert binomial_mean(half, 2, 1).value == pytest.approx(1.0, abs=1e-15)
    for name in ("geometric", "power_law", "factorial"):
        assert binomial_mean(view_of(name), 1, 1).value == pytest.approx(1.0, abs=1e-9)
    one = build_frequencies(FrequencySpec.explicit([1.0]))
    assert binomial_mean(one, 1, 1).value == 1.0
    fixed = binomial_mean(view_of("power_law"), 10_000, 1).value
    pois = phi(view_of("power_law"), 1, 10_000.0).value
    assert abs(fixed - pois) < 0.01 * pois


def test_binomial_mean_enumeration():
    p = [0.5, 0.3, 0.2]
    view = build_frequencies(FrequencySpec.explicit(p))
    n, r = 4, 2
    exact = sum(comb(n, r) * q**r * (1 - q) ** (n - r) for q in p)
    assert binomial_mean(view, n, r).value == pytest.approx(exact, rel=1e-13)


@pytest.mark.parametrize("r", [2, 3])
@pytest.mark.parametrize("name", ["power_law", "geometric"])
def test_derivative_relation(name, r):
    view = view_of(name)
    t = 50.0
    h = 1e-4 * t

    def f(x):
        return phi(view, 1, x, tol=1e-15).value / x

    if r == 2:
        fd = (f(t + h) - f(t - h)) / (2 * h)
    else:
        fd = (f(t + h) - 2 * f(t) + f(t - h)) / h**2
    want = (-1) ** (r - 1) * math.factorial(r) * t**-r * phi(view, r, t, tol=1e-15).value
    assert fd == pytest.approx(want, rel=1e-4)


def test_moment_table_shape():
    tab = moment_table(view_of("geometric"), (1, 2), [1.0, 2.0, 4.0])
    assert len(tab.entries) == 6
    assert len(tab.pairs) == 3
    assert tab.to_csv().count("\n") == 7


def test_huge_time_via_log_unit():
    # GenEx blocks reach t far beyond the double range
    view = view_of("genex")
    lt = 1400 * math.log(2)
    val = phi(view, 1, log_t=lt, log_unit=lt - 60)
    assert np.isfinite(val.value) and val.value > 0


# --- inequality properties ---------------------------------------------------

FAMILY_NAMES = sorted(FAMILY_SPECS)


def k_r(r):
    return 1 - math.exp(-r) * r**r / math.factorial(r)


@settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.sampled_from(FAMILY_NAMES), st.integers(0, 40), st.integers(1, 6))
def test_sandwich(name, e, r):
    view, t = view_of(name), 2.0**e
    p = phi(view, r, t)
    v = variance(view, r, t)
    tol = p.cert + v.cert + 1e-9
    assert v.value < p.value + tol
    assert v.value > k_r(r) * p.value - tol


@settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.sampled_from(FAMILY_NAMES), st.integers(1, 40), st.integers(1, 6), st.integers(1, 6))
def test_doubling(name, e, s, r):
    assume(s < r)
    view, t = view_of(name), 2.0**e
    lo = phi(view, s, t / 2)
    hi = phi(view, r, t)
    factor = (E / (r - s)) ** (r - s) * math.factorial(r) / (math.factorial(s) * 2**r)
    assert lo.value >= hi.value * factor - (lo.cert + factor * hi.cert + 1e-9)


@settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.sampled_from(FAMILY_NAMES), st.integers(0, 40))
def test_occupied_bracket(name, e):
    view, t = view_of(name), 2.0**e
    v = occupied_variance(view, t)
    lo = phi(view, 1, 2 * t)
    hi = phi(view, 1, t)
    assert 0.5 * lo.value < v.value + v.cert + lo.cert + 1e-9
    assert v.value < hi.value + v.cert + hi.cert + 1e-9


@settings(max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.sampled_from(FAMILY_NAMES), st.integers(0, 40),
       st.lists(st.integers(1, 6), min_size=1, max_size=6, unique=True))
def test_eigen_floor(name, e, R):
    R = tuple(sorted(R))
    try:
        cm = corr_matrix(view_of(name), R, 2.0**e)
    except DegenerateVarianceError:
        assume(False)
    assert cm.eigmin >= c_floor(R) - 1e-9


@settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.sampled_from(FAMILY_NAMES), st.integers(0, 40), st.integers(1, 6), st.integers(1, 6))
def test_covariance_nonpositive(name, e, r, s):
    assume(r != s)
    c = covariance(view_of(name), r, s, 2.0**e)
    assert c.value <= c.cert + 1e-9


def test_head_too_large_raises_instead_of_allocating():
    from occupancy_lab.moments import CertificationError

    with pytest.raises(CertificationError):
        phi(view_of("power_law"), 1, 2.0**80)
