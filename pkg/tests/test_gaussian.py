import math

import numpy as np
import pytest

from occupancy_lab import FrequencySpec, build_frequencies
from occupancy_lab.gaussian import (beta_bound, bentkus_bound, lattice_ks, normality_diagnostics,
                                    standardize)
from occupancy_lab.moments import DegenerateVarianceError, corr_matrix, moment_table
from occupancy_lab.sampling import SimConfig, monte_carlo, replicate_rng, sample_poissonized

from conftest import view_of

E1 = math.exp(-1)


def single_box_vector(count1):
    one = build_frequencies(FrequencySpec.explicit([1.0]))
    cv = sample_poissonized(one, 1.0, replicate_rng(0, 0))
    counts = np.zeros_like(cv.counts)
    counts[0] = count1
    return type(cv)(cv.scheme, 1.0, counts, 0, 0, count1, cv.prefix, 0), one


def test_standardize_single_box_example():
    cv, one = single_box_vector(1)
    tab = moment_table(one, (1,), [1.0])
    z = standardize(cv, (1,), tab)
    assert z[0] == pytest.approx((1 - E1) / math.sqrt(E1 * (1 - E1)), rel=1e-12)
    # direct arithmetic gives 1.310832; the commonly quoted 1.31057 is a rounding slip
    assert z[0] == pytest.approx(1.310832494, abs=1e-9)
    assert z[0] == pytest.approx(1.31057, abs=3e-4)


def test_standardize_at_mean_is_zero():
    cv, _ = single_box_vector(3)
    assert standardize(cv, (1,), {1: (3.0, 2.0)})[0] == 0.0


def test_standardize_degenerate():
    cv, _ = single_box_vector(0)
    with pytest.raises(DegenerateVarianceError):
        standardize(cv, (1,), {1: (0.0, 0.0)})


def test_beta_bound_example():
    assert beta_bound(2, 0.264241, 100) == pytest.approx(2.0823, abs=1e-4)
    # four times the variance halves the rate
    assert beta_bound(2, 0.264241, 400) == pytest.approx(beta_bound(2, 0.264241, 100) / 2)


def test_bentkus_bound_decreasing_in_t():
    view = view_of("power_law")
    vals = [bentkus_bound(view, (1, 2), t).beta for t in (1e2, 1e4, 1e6)]
    assert vals[0] > vals[1] > vals[2]


def test_null_case_passes():
    z = np.random.default_rng(12345).standard_normal((10_000, 3))
    rep = normality_diagnostics(z, np.eye(3))
    assert max(rep.ks) < 0.02 and rep.passed
    assert all(0 <= k <= 1 for k in rep.ks) and rep.cov_deviation >= 0


def test_lattice_ks_exact_on_discretized_normal():
    # a sample whose empirical law equals the discretized normal has zero corrected distance
    step = 0.25
    grid = np.arange(-40, 41) * step
    from scipy.stats import norm
    w = norm.cdf(grid + step / 2) - norm.cdf(grid - step / 2)
    reps = np.round(w * 1e6).astype(int)
    z = np.repeat(grid, reps)
    assert lattice_ks(z, step) < 2e-6
    # while the plain statistic is stuck near half the largest atom
    from scipy.stats import kstest
    assert kstest(z, "norm").statistic > 0.04


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        normality_diagnostics(np.zeros((10, 2)), np.eye(3))


def test_simulation_report_shapes():
    view = view_of("power_law")
    res = monte_carlo(view, SimConfig("poissonized", 1e4, reps=500, seed=1))
    rep = normality_diagnostics(res, corr_matrix(view, (1, 2, 3), 1e4))
    assert rep.R == (1, 2, 3) and rep.reps == 500
    assert len(rep.ks_raw) == 3
    assert rep.ks_csv().count("\n") == 4
