import json
import math

import numpy as np
import pytest

from occupancy_lab import FrequencySpec, build_frequencies
from occupancy_lab.asymptotics import (GridError, LimitCase, TGrid, block_times, classify_regime,
                                       dyadic_profile, estimate_alpha, limit_covariance, log_phi,
                                       ratio_scan, scan_pairs, sigma_convergence_scan,
                                       single_block_sigma)
from occupancy_lab.frequencies import LN2
from occupancy_lab.moments import corr_matrix, phi

from conftest import view_of


# --- grids -------------------------------------------------------------------

def test_grid_parse_plain_and_power():
    g = TGrid.parse("1:2:20")
    assert g.n == 20
    assert np.allclose(np.exp(g.log_t), 2.0 ** np.arange(20))
    h = TGrid.parse("2^10:2:5")
    assert np.allclose(h.log_t / LN2, [10, 11, 12, 13, 14])
    big = TGrid.parse("2^5000:2^100:3")
    assert big.log_t[-1] == pytest.approx(5200 * LN2)


@pytest.mark.parametrize("text", ["1:2", "0:2:5", "1:1:5", "1:0.5:5", "a:2:3", "1:2:0", "-2^3:2:4"])
def test_grid_parse_rejects(text):
    with pytest.raises(GridError):
        TGrid.parse(text)


def test_between_endpoints():
    g = TGrid.between(1.0, 5.0, 9)
    assert g.log_t[0] == 1.0 and g.log_t[-1] == pytest.approx(5.0)


# --- frequency diagnostics ---------------------------------------------------

def test_dyadic_profile_examples():
    v = build_frequencies(FrequencySpec.explicit([0.5, 0.25, 0.25]))
    assert dyadic_profile(v, 3)[:3] == [0, 1, 2]
    assert dyadic_profile(view_of("geometric"), 20) == [0] + [1] * 20


def test_dyadic_profile_power_law_against_counting():
    view = view_of("power_law")
    p = view.probs(1, 200_001)
    prof = dyadic_profile(view, 14)
    for j, m in enumerate(prof):
        brute = int(np.sum((p > 2.0 ** -(j + 1)) & (p <= 2.0**-j)))
        assert m == brute


def test_ratio_scans():
    geo = ratio_scan(view_of("geometric"), 1, (1, 60))
    assert geo.min == pytest.approx(0.5) and geo.max == pytest.approx(0.5)
    pl = ratio_scan(view_of("power_law"), 1, (10**4, 10**4 + 1), points=[10**4])
    assert pl.min == pytest.approx((1e4 / 10001) ** 2, rel=1e-12)
    bgy = ratio_scan(view_of("bgy_ex2"), 1, (1, 10**6))
    assert bgy.trend == "oscillating"
    assert bgy.min < 1e-6 and bgy.max == pytest.approx(1.0)


# --- regimes -----------------------------------------------------------------

def test_regime_small_families():
    grid = TGrid.geometric(1.0, 2.0, 41)
    assert classify_regime(view_of("geometric"), 3, grid).verdict == "Regime4"
    assert classify_regime(view_of("power_law"), 3, grid).verdict == "Regime1"
    assert classify_regime(view_of("stretched_exp"), 3, grid).verdict == "Regime1"


def test_regime_bgy_and_report_serializes():
    rep = classify_regime(view_of("bgy_ex2"), 3, TGrid.between(0.0, 8000 * LN2, 401))
    assert (rep.verdict, rep.r0) == ("Regime2", 1)
    assert rep.label == "Regime2(r0=1)" or "1" in rep.label
    json.loads(rep.to_json())


def test_log_phi_beyond_double_range():
    view = view_of("genex")
    a, b = block_times(view, 10)
    assert a > 709
    assert log_phi(view, 2, a) > math.log(10)
    assert log_phi(view, 2, b) < math.log(0.5)


def test_log_phi_matches_phi_in_range():
    for lt in (0.0, 5.0, 20.0):
        direct = math.log(phi(view_of("power_law"), 2, math.exp(lt)).value)
        assert log_phi(view_of("power_law"), 2, lt) == pytest.approx(direct, abs=1e-9)


def test_block_times_definition():
    view = view_of("genex")
    for l in (2, 5, 9):
        a, b = block_times(view, l)
        i = l - view.index0
        assert a == pytest.approx(-view.log_q[i])
        log_m_next = view.log_m[i + 1]
        assert b == pytest.approx(LN2 + a + math.log(log_m_next))


# --- alpha -------------------------------------------------------------------

def test_alpha_power_law():
    grid = TGrid.geometric(1.0, 1.5, 57)
    ests = [estimate_alpha(view_of("power_law"), r, grid) for r in (1, 2)]
    for e in ests:
        assert e.converged and e.in_range
        assert e.alpha == pytest.approx(0.5, abs=1e-6)
    assert ests[0].c == pytest.approx(0.25, abs=1e-6)


def test_alpha_geometric_not_converged():
    est = estimate_alpha(view_of("geometric"), 1, TGrid.geometric(1.0, 1.5, 57))
    assert not est.converged
    assert est.to_dict()["reliable"] is False


# --- limiting covariance -----------------------------------------------------

def proper_S(alpha, R):
    def g(x):
        return math.gamma(x)

    S = np.empty((len(R), len(R)))
    for i, r in enumerate(R):
        for k, s in enumerate(R):
            cross = g(r + s - alpha) / (math.factorial(r) * math.factorial(s) * 2 ** (r + s - alpha))
            S[i, k] = (g(r - alpha) / math.factorial(r) if r == s else 0.0) - cross
    return alpha * S


def corr_of(S):
    d = np.sqrt(np.diag(S))
    return S / np.outer(d, d)


@pytest.mark.parametrize("alpha", [0.2, 0.5, 0.8])
def test_limit_covariance_proper_against_gamma_formula(alpha):
    R = (1, 2, 3, 4)
    lc = limit_covariance(alpha, R)
    assert np.allclose(lc.S, proper_S(alpha, R), rtol=1e-12, atol=1e-14)
    assert np.allclose(lc.corr, corr_of(proper_S(alpha, R)), atol=1e-12)
    assert lc.eigmin > 0


def test_limit_covariance_slow_is_alpha_to_zero_limit():
    R = (1, 2, 3)
    slow = limit_covariance(0.0, R)
    near = limit_covariance(1e-8, R)
    assert slow.case.kind == "slow"
    assert np.allclose(slow.corr, near.corr, atol=1e-6)
    assert np.allclose(slow.S, proper_S(1e-8, R) / 1e-8, atol=1e-6)


def test_limit_covariance_index_one():
    lc = limit_covariance(1.0, (1, 2, 3))
    assert lc.decoupled
    assert lc.corr[0, 1] == 0.0 and lc.corr[0, 2] == 0.0
    s22 = 0.5 - 2 / 32
    s33 = 1 / 6 - 24 / 1152
    assert lc.corr[1, 2] == pytest.approx(-(6 / 192) / math.sqrt(s22 * s33), rel=1e-12)


def test_limit_case_from_alpha():
    assert LimitCase.from_alpha(0.0).kind == "slow"
    assert LimitCase.from_alpha(1.0).kind == "index1"
    assert LimitCase.from_alpha(0.3).kind == "proper"
    with pytest.raises(ValueError):
        LimitCase.from_alpha(1.5)


def test_power_law_corr_approaches_limit():
    cm = corr_matrix(view_of("power_law"), (1, 2, 3), 1e12)
    assert np.allclose(cm.matrix, limit_covariance(0.5, (1, 2, 3)).corr, atol=1e-4)


# --- sigma scan --------------------------------------------------------------

def test_scan_pairs():
    pairs = scan_pairs()
    assert len(pairs) == 24
    assert (1, 5) in pairs and (2, 10) in pairs and (6, 6) not in pairs
    assert all(r < s for r, s in pairs)


def test_single_block_sigma_against_corr_matrix():
    m = 300
    view = build_frequencies(FrequencySpec.explicit([1 / m] * m))
    for fi in (0.5, 1.0, 2.0):
        cm = corr_matrix(view, (1, 2, 3), fi * m)
        assert single_block_sigma(1, 2, fi) == pytest.approx(cm.matrix[0, 1], rel=1e-12)
        assert single_block_sigma(2, 3, fi) == pytest.approx(cm.matrix[1, 2], rel=1e-12)


def test_scan_power_law_converges_to_limit():
    grid = TGrid.between(math.log(1e2), math.log(1e12), 40)
    pairs = [(1, 2), (2, 3), (2, 5), (3, 4)]
    sc = sigma_convergence_scan(view_of("power_law"), grid, pairs=pairs)
    lim = limit_covariance(0.5, (1, 2, 3, 4, 5)).corr
    for p in sc.pairs:
        assert p.verdict == "converged"
        assert p.limit == pytest.approx(lim[p.r - 1, p.s - 1], abs=0.02)
    assert sc.premise_plausible
    assert sc.to_csv().splitlines()[0] == "t,r,s,sigma"


def test_scan_single_block_degenerates_to_skips():
    view = build_frequencies(FrequencySpec.explicit([1.0]))
    sc = sigma_convergence_scan(view, TGrid.geometric(1e-3, 2.0, 40), pairs=[(1, 2)])
    assert sc.skipped  # the single box is almost surely overfull at large t
    assert sc.to_dict()["skipped_points"] == list(sc.skipped)
