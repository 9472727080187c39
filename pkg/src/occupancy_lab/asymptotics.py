"""Asymptotic diagnostics: regimes, index estimation, limit covariances."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special

from .frequencies import LN2, NEG_INF, FrequencyView, log_rho
from .moments import covariance, phi, variance

# values are divided by exp(log_t - UNIT_HEADROOM) once t passes that size,
# which keeps every Phi_r(t) <= t finite
UNIT_HEADROOM = 600.0
MIN_REGIME_POINTS = 16
MIN_SCAN_POINTS = 32
NOISE_FLOOR = 1e-9
# below exp(MIN_UNIT) a moment is reported as zero
MIN_UNIT = -1e6


class GridError(ValueError):
    pass


def _unit(lt: float) -> float:
    return max(0.0, lt - UNIT_HEADROOM)


def _fmt_t(lt: float) -> str:
    if lt < 700:
        return repr(float(math.exp(lt)))
    return f"exp({lt!r})"


# ---------------------------------------------------------------------------
# time grids

@dataclass(frozen=True)
class TGrid:
    """Geometric grid t_k = a * f**k, k < n, stored as logs."""

    log_start: float
    log_factor: float
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise GridError("grid needs at least one point")
        if not self.log_factor > 0:
            raise GridError("grid factor must exceed 1")
        if not math.isfinite(self.log_start):
            raise GridError("grid start must be positive and finite")

    @classmethod
    def geometric(cls, start: float, factor: float, n: int) -> "TGrid":
        if not start > 0 or not factor > 1:
            raise GridError("need start > 0 and factor > 1")
        return cls(math.log(start), math.log(factor), int(n))

    @classmethod
    def between(cls, log_lo: float, log_hi: float, n: int) -> "TGrid":
        if n < 2 or not log_hi > log_lo:
            raise GridError("need n >= 2 and log_hi > log_lo")
        return cls(float(log_lo), (log_hi - log_lo) / (n - 1), int(n))

    @classmethod
    def parse(cls, text: str) -> "TGrid":
        """Parse ``a:f:n``; a and f may be written as ``b^e`` (e.g. 2^30)."""
        parts = text.split(":")
        if len(parts) != 3:
            raise GridError(f"t-grid must look like a:f:n, got {text!r}")
        try:
            la, lf = (_parse_log(p) for p in parts[:2])
            n = int(parts[2])
        except ValueError as exc:
            raise GridError(f"bad t-grid {text!r}: {exc}") from None
        return cls(la, lf, n)

    @property
    def log_t(self) -> np.ndarray:
        return self.log_start + self.log_factor * np.arange(self.n)

    def to_dict(self) -> dict:
        return {"log_start": self.log_start, "log_factor": self.log_factor, "n": self.n}


def _parse_log(text: str) -> float:
    text = text.strip()
    if "^" in text:
        base, expo = text.split("^", 1)
        b, e = float(base), float(expo)
        if not b > 0:
            raise ValueError("base must be positive")
        return e * math.log(b)
    v = float(text)
    if not v > 0:
        raise ValueError("grid values must be positive")
    return math.log(v)


def _as_log_grid(grid) -> np.ndarray:
    if isinstance(grid, TGrid):
        return grid.log_t
    arr = np.asarray(grid, dtype=np.float64)
    if arr.ndim != 1 or np.any(np.diff(arr) <= 0):
        raise GridError("log-time grid must be a strictly increasing 1-d array")
    return arr


def scaled(fn, lt: float, tol: float = 1e-9) -> tuple[float, float]:
    """(v, u) with fn(...) = v * exp(u) and v of order one.

    ``fn(log_t=, log_unit=, tol=)`` is any of the moment routines. A first
    pass finds the magnitude (stepping the unit down while the result
    underflows); a second pass at that unit makes the tolerance relative.
    """
    u = _unit(lt)
    v = fn(log_t=lt, log_unit=u, tol=tol).value
    step = 650.0
    while v == 0 and u > MIN_UNIT:
        w = fn(log_t=lt, log_unit=u - step, tol=tol).value
        if math.isinf(w):
            step /= 2
        elif w == 0:
            u, step = u - step, step * 2
        else:
            u, v = u - step, w
    if v > 0 and abs(math.log(v)) > 30:
        u += math.log(v)
        v = fn(log_t=lt, log_unit=u, tol=tol).value
    return v, u


def log_phi(view: FrequencyView, r: int, lt: float, tol: float = 1e-9) -> float:
    """log Phi_r(e^lt), finite far beyond double range."""
    v, u = scaled(lambda **kw: phi(view, r, strict=False, **kw), lt, tol)
    return math.log(v) + u if v > 0 else NEG_INF


# ---------------------------------------------------------------------------
# frequency-side diagnostics

def dyadic_profile(view: FrequencyView, j_max: int) -> list[int]:
    """m_j = #{l : 2^-(j+1) < p_l <= 2^-j} for j = 0..j_max."""
    if j_max < 0:
        raise ValueError("j_max must be >= 0")
    above = [view.count_above(2.0 ** (-j)) for j in range(j_max + 2)]
    return [above[j + 1] - above[j] for j in range(j_max + 1)]


@dataclass(frozen=True)
class RatioScan:
    h: int
    window: tuple[int, int]
    min: float
    max: float
    trend: str
    values: tuple[float, ...] = field(repr=False)

    def to_dict(self) -> dict:
        return {"h": self.h, "window": list(self.window), "min": self.min,
                "max": self.max, "trend": self.trend}


def _classify_trend(vals: np.ndarray) -> str:
    lo, hi = float(vals.min()), float(vals.max())
    if hi - lo > 0.25:
        return "oscillating"
    if hi < 1e-3:
        return "->0"
    if lo > 0.99 or (hi > 0.95 and np.all(np.diff(vals) >= 0)):
        return "->1"
    return "->constant<1"


def ratio_scan(view: FrequencyView, h: int, j_window: tuple[int, int],
               points: Optional[Sequence[int]] = None) -> RatioScan:
    """p_{j+h}/p_j over j in [j0, j1].

    Long windows are thinned to ``points`` (log-spaced indices plus every
    block boundary inside the window) since block sizes are astronomical.
    """
    if h < 1:
        raise ValueError("h must be >= 1")
    j0, j1 = int(j_window[0]), int(j_window[1])
    if j0 < 1 or j1 < j0:
        raise ValueError("window must satisfy 1 <= j0 <= j1")
    size = view.support_size
    if size is not None and j1 + h > size:
        raise ValueError(f"window runs past the finite support ({size} boxes)")
    js = sorted(set(points)) if points is not None else _window_points(view, j0, j1)
    vals = np.array([math.exp(view.log_prob(j + h) - view.log_prob(j)) for j in js])
    return RatioScan(h, (j0, j1), float(vals.min()), float(vals.max()),
                     _classify_trend(vals), tuple(float(v) for v in vals))


def _window_points(view: FrequencyView, j0: int, j1: int, n: int = 256) -> list[int]:
    if j1 - j0 < n:
        return list(range(j0, j1 + 1))
    l0 = math.log(j0)
    span = math.log(j1) - l0
    pts = {j0, j1}
    pts.update(min(j1, max(j0, _int_exp(l0 + span * k / (n - 1)))) for k in range(n))
    if getattr(view, "is_blocks", False):
        pts.update(c for c in view.cum if j0 <= c <= j1)
    return sorted(pts)


def _int_exp(lx: float) -> int:
    """floor-ish exp(lx) as an int, for arguments beyond double range."""
    if lx < 700:
        return int(math.exp(lx))
    e2 = lx / LN2
    whole = int(e2) - 52
    return int(2.0 ** (e2 - whole)) << whole


# ---------------------------------------------------------------------------
# regime classification

@dataclass(frozen=True)
class Thresholds:
    high: float = 10.0
    low: float = 2.0
    window: float = 0.25
    oscillation: float = 4.0

    def to_dict(self) -> dict:
        return {"high": self.high, "low": self.low, "window": self.window,
                "oscillation": self.oscillation}


@dataclass(frozen=True)
class REvidence:
    r: int
    log_inf: float
    log_sup: float
    grid_log_ratio: float  # log(sup/inf) over the whole grid
    rho_first: float
    rho_last: float

    @property
    def inf(self) -> float:
        return _safe_exp(self.log_inf)

    @property
    def sup(self) -> float:
        return _safe_exp(self.log_sup)

    def to_dict(self) -> dict:
        return {"r": self.r, "inf": self.inf, "sup": self.sup, "log_inf": self.log_inf,
                "log_sup": self.log_sup, "log_sup_over_inf_grid": self.grid_log_ratio,
                "log_rho_first": self.rho_first, "log_rho_last": self.rho_last}


def _safe_exp(x: float) -> float:
    return math.exp(x) if x < 709 else math.inf


@dataclass(frozen=True)
class RegimeReport:
    verdict: str
    r0: Optional[int]
    evidence: tuple[REvidence, ...]
    ratios: tuple[RatioScan, ...]
    thresholds: Thresholds
    grid: tuple[float, float, int]

    @property
    def label(self) -> str:
        return f"Regime2({self.r0})" if self.verdict == "Regime2" else self.verdict

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "r0": self.r0,
                "evidence": [e.to_dict() for e in self.evidence],
                "ratios": [s.to_dict() for s in self.ratios],
                "thresholds": self.thresholds.to_dict(),
                "grid": {"log_t_first": self.grid[0], "log_t_last": self.grid[1], "n": self.grid[2]}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _rho_points(view: FrequencyView, lt_last: float) -> list[int]:
    # boxes with t p_j > 1 at the last grid time
    jmax = view._count_above_log(-lt_last)
    if view.support_size is not None:
        jmax = min(jmax, view.support_size - 1)
    jmax = max(jmax, 2)
    return _window_points(view, max(1, jmax // 16), jmax, n=64)


def classify_regime(view: FrequencyView, r_max: int = 3, t_grid=None,
                    thresholds: Thresholds = Thresholds(), h_max: int = 3,
                    tol: float = 1e-9) -> RegimeReport:
    """Heuristic regime verdict from Phi_r over the late part of the grid.

    Checked in order: all r grow (Regime1); growth up to r0 then
    oscillation (Regime2); everything stays small (Regime4); oscillation
    already at r = 1 (Regime3); otherwise Inconclusive.
    """
    if r_max < 1:
        raise ValueError("r_max must be >= 1")
    lts = _as_log_grid(t_grid if t_grid is not None else TGrid.geometric(1.0, 2.0, 41))
    if len(lts) < MIN_REGIME_POINTS:
        raise GridError(f"grid too short: {len(lts)} < {MIN_REGIME_POINTS} points")
    w = max(2, int(math.ceil(thresholds.window * len(lts))))
    lhigh, llow = math.log(thresholds.high), math.log(thresholds.low)
    losc = math.log(thresholds.oscillation)

    jpts = _rho_points(view, float(lts[-1]))
    evidence = []
    for r in range(1, r_max + 1):
        lp = np.array([log_phi(view, r, float(x), tol) for x in lts])
        late = lp[-w:]
        lrho = [log_rho(view, j, r) for j in (jpts[0], jpts[-1])]
        evidence.append(REvidence(r, float(late.min()), float(late.max()),
                                  float(lp.max() - lp.min()), lrho[0], lrho[1]))

    grows = [e.log_inf > lhigh for e in evidence]
    osc = [e.log_sup - e.log_inf > losc and e.log_sup > llow for e in evidence]
    r0 = None
    if all(grows):
        verdict = "Regime1"
    else:
        k = grows.index(False)  # first r (0-based) that fails to grow
        if k >= 1 and osc[k]:
            verdict, r0 = "Regime2", k
        elif all(e.log_sup < llow for e in evidence):
            verdict = "Regime4"
        elif osc[0]:
            verdict = "Regime3"
        else:
            verdict = "Inconclusive"

    ratios = []
    size = view.support_size
    for h in range(1, h_max + 1):
        j0, j1 = jpts[0], jpts[-1]
        if size is not None:
            j1 = min(j1, size - h)
        if j1 >= j0:
            ratios.append(ratio_scan(view, h, (j0, j1), [j for j in jpts if j <= j1]))
    return RegimeReport(verdict, r0, tuple(evidence), tuple(ratios), thresholds,
                        (float(lts[0]), float(lts[-1]), len(lts)))


# ---------------------------------------------------------------------------
# regular-variation index

ALPHA_AMPLITUDE = 0.05
ALPHA_MAX_SIGN_CHANGES = 2


@dataclass(frozen=True)
class AlphaEstimate:
    r: int
    log_t: tuple[float, ...]
    ratios: tuple[float, ...]
    c: float
    alpha: float
    in_range: bool
    amplitude: float
    sign_changes: int
    converged: bool

    def to_dict(self) -> dict:
        return {"r": self.r, "c": self.c, "alpha_hat": self.alpha, "in_range": self.in_range,
                "amplitude": self.amplitude, "sign_changes": self.sign_changes,
                "converged": self.converged, "reliable": self.converged,
                "series": [{"t": _fmt_t(x), "log_t": x, "ratio": v}
                           for x, v in zip(self.log_t, self.ratios)]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "log_t", "ratio"])
        for x, v in zip(self.log_t, self.ratios):
            w.writerow([_fmt_t(x), repr(x), repr(v)])
        return buf.getvalue()


def _sign_changes(vals: np.ndarray, floor: float) -> int:
    d = np.diff(vals)
    d = d[np.abs(d) > floor]
    return int(np.sum(np.diff(np.sign(d)) != 0))


def estimate_alpha(view: FrequencyView, r: int, t_grid, tol: float = 1e-9) -> AlphaEstimate:
    """alpha = r - c (r + 1) from c = lim Phi_{r+1}/Phi_r.

    c is the median over the last quarter of the grid. The ratios count as
    converged when their spread over the last half stays below 0.05 and
    they drift monotonically (at most two reversals above the noise floor);
    log-periodic wiggles of bounded schemes fail the second test even when
    tiny.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    lts = _as_log_grid(t_grid)
    if len(lts) < 8:
        raise GridError("estimate_alpha needs at least 8 grid points")
    ratios = np.array([math.exp(log_phi(view, r + 1, x, tol) - log_phi(view, r, x, tol))
                       for x in lts])
    n = len(ratios)
    c = float(np.median(ratios[n - max(1, n // 4):]))
    half = ratios[n // 2:]
    amp = float(half.max() - half.min())
    sc = _sign_changes(half, NOISE_FLOOR)
    converged = amp < ALPHA_AMPLITUDE and sc <= ALPHA_MAX_SIGN_CHANGES
    in_range = (r - 1) / (r + 1) - 1e-12 <= c <= r / (r + 1) + 1e-12
    return AlphaEstimate(r, tuple(float(x) for x in lts), tuple(float(v) for v in ratios),
                         c, r - c * (r + 1), in_range, amp, sc, converged)


# ---------------------------------------------------------------------------
# limiting covariance matrices

@dataclass(frozen=True)
class LimitCase:
    kind: str  # "proper", "slow", "index1"
    alpha: float

    @classmethod
    def proper(cls, alpha: float) -> "LimitCase":
        if not 0 < alpha < 1:
            raise ValueError("proper case needs alpha in (0, 1)")
        return cls("proper", float(alpha))

    @classmethod
    def slow_variation(cls) -> "LimitCase":
        return cls("slow", 0.0)

    @classmethod
    def index1(cls) -> "LimitCase":
        return cls("index1", 1.0)

    @classmethod
    def from_alpha(cls, alpha: float) -> "LimitCase":
        if not 0 <= alpha <= 1:
            raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
        if alpha == 0:
            return cls.slow_variation()
        if alpha == 1:
            return cls.index1()
        return cls.proper(alpha)

    @property
    def label(self) -> str:
        return {"proper": f"Proper({self.alpha!r})", "slow": "SlowVariation",
                "index1": "Index1"}[self.kind]


@dataclass(frozen=True)
class LimitCovariance:
    case: LimitCase
    R: tuple[int, ...]
    S: np.ndarray
    corr: np.ndarray
    decoupled: bool

    @property
    def eigmin(self) -> float:
        keep = [i for i, r in enumerate(self.R) if not (self.decoupled and r == 1)]
        if not keep:
            return 0.0
        return float(np.linalg.eigvalsh(self.S[np.ix_(keep, keep)])[0])

    def to_dict(self) -> dict:
        return {"case": self.case.label, "alpha": self.case.alpha, "R": list(self.R),
                "S": self.S.tolist(), "corr": self.corr.tolist(),
                "decoupled_r1": self.decoupled, "eigmin": self.eigmin}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _s_proper(a: float, r: int, s: int) -> float:
    lf = math.lgamma(r + 1) + math.lgamma(s + 1)
    if r != s:
        return -a * math.exp(math.lgamma(r + s - a) - lf - (r + s - a) * LN2)
    return a / math.factorial(r) * (math.gamma(r - a)
                                    - math.exp(math.lgamma(2 * r - a) - math.lgamma(r + 1)
                                               - (2 * r - a) * LN2))


def _s_slow(r: int, s: int) -> float:
    if r != s:
        return -special.comb(r + s, r, exact=False) / ((r + s) * 2.0 ** (r + s))
    return 1.0 / r - special.comb(2 * r, r, exact=False) / (r * 2.0 ** (2 * r + 1))


def limit_covariance(case, R: Sequence[int]) -> LimitCovariance:
    """Limit covariance S of the standardized counts and its correlation form.

    ``case`` is a LimitCase or an alpha in [0, 1]. For alpha = 1 the r = 1
    coordinate decouples: its row and column of S are zero and its
    correlation row is the unit vector.
    """
    if not isinstance(case, LimitCase):
        case = LimitCase.from_alpha(float(case))
    R = tuple(int(r) for r in R)
    if not R or R[0] < 1 or any(b <= a for a, b in zip(R, R[1:])):
        raise ValueError("R must be a nonempty strictly increasing set of integers >= 1")
    m = len(R)
    S = np.zeros((m, m))
    for i, r in enumerate(R):
        for k, s in enumerate(R):
            if k < i:
                continue
            if case.kind == "slow":
                v = _s_slow(r, s)
            elif case.kind == "index1" and 1 in (r, s):
                v = 0.0
            else:
                v = _s_proper(case.alpha, r, s)
            S[i, k] = S[k, i] = v
    d = np.sqrt(np.diag(S))
    corr = np.eye(m)
    for i in range(m):
        for k in range(m):
            if i != k and d[i] > 0 and d[k] > 0:
                corr[i, k] = S[i, k] / (d[i] * d[k])
    return LimitCovariance(case, R, S, corr, case.kind == "index1" and 1 in R)


def single_block_sigma(r: int, s: int, phi_: float) -> float:
    """Sigma_rs for m equal boxes at t = phi * m (independent of m)."""
    lp = lambda k: -phi_ + k * math.log(phi_) - math.lgamma(k + 1)  # noqa: E731
    pr, ps = math.exp(lp(r)), math.exp(lp(s))
    return -math.sqrt(pr * ps / ((1 - pr) * (1 - ps)))


def block_times(view: FrequencyView, l: int) -> tuple[float, float]:
    """(log 1/q_l, log t'_l) with t'_l = 2 q_l^-1 log m_{l+1}; l is 1-based."""
    if not getattr(view, "is_blocks", False):
        raise ValueError("block_times needs a block view")
    i = l - view.index0
    if not 0 <= i < view.n_blocks - 1:
        raise ValueError(f"block {l} needs a successor inside the capped model")
    lq = view.level(i)
    return -lq, LN2 - lq + math.log(float(view.log_m[i + 1]))


# ---------------------------------------------------------------------------
# correlation convergence scan

SCAN_CONVERGED = 0.01
SCAN_OSCILLATING = 0.1
SCAN_RELATIVE_SWING = 0.5


def scan_pairs() -> list[tuple[int, int]]:
    pairs = [(1, s) for s in range(2, 6)]
    pairs += [(r, s) for r in range(2, 12) for s in range(r + 1, 12) if r + s <= 12]
    return pairs


@dataclass(frozen=True)
class PairScan:
    r: int
    s: int
    sigma: tuple[float, ...]  # nan where skipped
    verdict: str
    limit: float
    amplitude: float

    def to_dict(self) -> dict:
        return {"r": self.r, "s": self.s, "verdict": self.verdict, "limit": self.limit,
                "amplitude": self.amplitude,
                "sigma": [None if math.isnan(v) else v for v in self.sigma]}


@dataclass(frozen=True)
class SigmaScan:
    log_t: tuple[float, ...]
    pairs: tuple[PairScan, ...]
    skipped: tuple[int, ...]  # grid indices with a degenerate variance
    premise_plausible: bool

    def pair(self, r: int, s: int) -> PairScan:
        for p in self.pairs:
            if (p.r, p.s) == (r, s):
                return p
        raise KeyError((r, s))

    def to_dict(self) -> dict:
        return {"grid": {"log_t_first": self.log_t[0], "log_t_last": self.log_t[-1],
                         "n": len(self.log_t)},
                "skipped_points": list(self.skipped),
                "premise_plausible": self.premise_plausible,
                "pairs": [p.to_dict() for p in self.pairs]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "r", "s", "sigma"])
        for p in self.pairs:
            for x, v in zip(self.log_t, p.sigma):
                w.writerow([_fmt_t(x), p.r, p.s, "" if math.isnan(v) else repr(v)])
        return buf.getvalue()


def _scan_verdict(amp: float, peak: float) -> str:
    # a swing comparable to the correlation itself is oscillation even when
    # the correlation is small in absolute terms
    if amp < SCAN_CONVERGED:
        return "converged"
    if amp > SCAN_OSCILLATING or amp > SCAN_RELATIVE_SWING * peak:
        return "oscillating"
    return "inconclusive"


def sigma_convergence_scan(view: FrequencyView, t_grid, pairs: Optional[Sequence[tuple[int, int]]] = None,
                           tol: float = 1e-9, threshold_high: float = 10.0) -> SigmaScan:
    """Sigma_rs(t) along the grid with a converged/oscillating verdict per pair.

    The premise flag asks whether every variance involved exceeds
    ``threshold_high`` over the last half of the grid, a stand-in for the
    growth hypothesis behind convergence.
    """
    lts = _as_log_grid(t_grid)
    if len(lts) < MIN_SCAN_POINTS:
        raise GridError(f"grid too short: {len(lts)} < {MIN_SCAN_POINTS} points")
    pairs = [tuple(p) for p in (pairs if pairs is not None else scan_pairs())]
    for r, s in pairs:
        if not 1 <= r < s:
            raise ValueError(f"pairs need 1 <= r < s, got {(r, s)}")
    rs = sorted({r for p in pairs for r in p})
    sums = sorted({r + s for r, s in pairs})
    n = len(lts)
    # log sqrt V_r and signed log |C| pieces, per grid point
    lsv = {r: np.full(n, np.nan) for r in rs}
    lphi2 = {k: np.full(n, np.nan) for k in sums}
    for i, x in enumerate(lts):
        x = float(x)
        for r in rs:
            v, u = scaled(lambda **kw: variance(view, r, strict=False, check=False, **kw), x, tol)
            if v > 0 and math.isfinite(v):
                lsv[r][i] = 0.5 * (math.log(v) + u)
        for k in sums:
            v, u = scaled(lambda **kw: phi(view, k, strict=False, **kw), x + LN2, tol)
            lphi2[k][i] = math.log(v) + u if v > 0 else -np.inf
    skipped = set()
    out = []
    for r, s in pairs:
        lcoef = math.log(special.comb(r + s, r, exact=True)) - (r + s) * LN2
        sig = -np.exp(lcoef + lphi2[r + s] - lsv[r] - lsv[s])
        bad = np.isnan(sig)
        skipped.update(int(i) for i in np.flatnonzero(bad))
        half = sig[n // 2:]
        half = half[~np.isnan(half)]
        if half.size:
            amp, lim = float(half.max() - half.min()), float(np.median(half))
            verdict = _scan_verdict(amp, float(np.abs(half).max()))
        else:
            amp, lim, verdict = math.nan, math.nan, "inconclusive"
        out.append(PairScan(r, s, tuple(float(v) for v in sig), verdict, lim, amp))
    lh = 0.5 * math.log(threshold_high)
    premise = all(np.nanmin(lsv[r][n // 2:]) > lh for r in rs)
    return SigmaScan(tuple(float(x) for x in lts), tuple(out), tuple(sorted(skipped)), bool(premise))
