"""Certified Poissonized moments Phi_r(t), V_r(t), C_rs(t) and Sigma_R(t).

Each sum over boxes is split at the last atom with t*p >= HEAD_EPS.  The head
is summed term by term (in log space, so block sizes like 2**4096 are fine).
On the tail every box has t*p < HEAD_EPS, so the summand is replaced by its
alternating Taylor polynomial in t*p; each power becomes a power tail
sum_{j>J} p_j**s supplied by the frequency view, and the Taylor remainder
plus the width of any power-tail interval form the certificate.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import special

from .frequencies import NEG_INF, FrequencyView

HEAD_EPS = 0.25
MAX_TAYLOR = 60
MAX_TERMS = 10**8
MAX_HEAD = 2 * 10**7  # atoms summed explicitly; bounds memory for sequence families
DEGENERATE_VAR = 1e-12


class CertificationError(RuntimeError):
    """Requested tolerance not reached within the iteration cap."""

    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved certificate {achieved:.3e})")
        self.achieved = achieved


class DegenerateVarianceError(ValueError):
    def __init__(self, r: int, value: float):
        super().__init__(f"variance of Y_{r} is degenerate ({value:.3e} < {DEGENERATE_VAR:g})")
        self.r = r
        self.value = value


@dataclass(frozen=True)
class Certified:
    """A value with an absolute truncation-error certificate."""

    value: float
    cert: float
    capped: bool = False

    def __float__(self) -> float:
        return self.value

    def __neg__(self) -> "Certified":
        return Certified(-self.value, self.cert, self.capped)

    def scaled(self, c: float) -> "Certified":
        return Certified(c * self.value, abs(c) * self.cert, self.capped)

    def __sub__(self, other: "Certified") -> "Certified":
        return Certified(self.value - other.value, self.cert + other.cert, self.capped or other.capped)


def _log_t(t: Optional[float], log_t: Optional[float]) -> float:
    if log_t is not None:
        return float(log_t)
    if t is None or t < 0:
        raise ValueError("t must be nonnegative")
    return math.log(t) if t > 0 else NEG_INF


def log_comb(n: int, k: int) -> float:
    if k < 0 or k > n:
        return NEG_INF
    if n <= 64:
        return math.log(math.comb(n, k))
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


@lru_cache(maxsize=64)
def _atoms(view: FrequencyView, n: int) -> tuple[np.ndarray, np.ndarray]:
    return view.atoms(n)


@lru_cache(maxsize=65536)
def _tail_power(view: FrequencyView, n: int, s: float) -> tuple[float, float]:
    return view.atom_tail_log_power(n, s)


def _tail_series(view: FrequencyView, n: int, log_scale: float,
                 terms: Sequence[tuple[float, float, int]],
                 remainders: Sequence[tuple[float, float]], unit: float = 0.0) -> tuple[float, float]:
    """sum_k sign_k * exp(logc_k) * scale**s_k * P_{s_k}, with error bound.

    ``terms`` holds (s, log|coef|, sign); each remainder (s, log coef)
    bounds a Taylor remainder by coef * scale**s * P_s.
    """
    value = 0.0
    err = 0.0
    for s, lc, sign in terms:
        lo, hi = _tail_power(view, n, s)
        if hi == NEG_INF:
            continue
        base = lc + s * log_scale - unit
        mid = float(np.logaddexp(lo, hi)) - math.log(2.0)
        value += sign * math.exp(base + mid)
        if hi > lo:
            err += math.exp(base + hi) * (-math.expm1(lo - hi)) / 2.0
    for s, lc in remainders:
        if lc == NEG_INF:
            continue
        lo, hi = _tail_power(view, n, s)
        if hi != NEG_INF:
            err += math.exp(lc + s * log_scale + hi - unit)
    return value, err


def _adaptive(view: FrequencyView, log_scale: float, tol: float, head_fn, tail_terms,
              what: str, strict: bool, unit: float = 0.0) -> Certified:
    """Grow the head until the tail certificate drops below tol.

    ``head_fn(log_m, log_p)`` sums the head atoms; ``tail_terms(K)`` returns
    (terms, remainders) for a Taylor order K. All values are divided by
    exp(unit), which keeps astronomically large sums finite.
    """
    n = view.head_atoms(log_scale, HEAD_EPS)
    if n > MAX_HEAD:
        raise CertificationError(f"{what}: about 2^{n.bit_length()} head terms needed, "
                                 f"more than the {MAX_HEAD:,} that are summed explicitly", math.inf)
    limit = view.n_atoms
    best = None
    while True:
        if limit is not None:
            n = min(n, limit)
        log_m, log_p = _atoms(view, n)
        with np.errstate(over="ignore"):
            head = head_fn(log_m - unit, log_p)
        if limit is not None and n >= limit and view.atom_tail_log_power(n, 1)[1] == NEG_INF:
            return Certified(head, 0.0)
        tail, err = 0.0, math.inf
        for K in range(1, MAX_TAYLOR + 1):
            tail, err = _tail_series(view, n, log_scale, *tail_terms(K), unit=unit)
            if err <= tol / 2:
                break
        if best is None or err < best.cert:
            best = Certified(head + tail, err)
        if err <= tol:
            return best
        if (limit is not None and n >= limit) or n >= MAX_HEAD or view.atom_boxes(n) >= MAX_TERMS:
            if strict:
                raise CertificationError(f"{what}: tolerance {tol:g} not reached", best.cert)
            return Certified(best.value, best.cert, capped=True)
        n = min(max(2 * n, 16), MAX_HEAD)


# ---------------------------------------------------------------------------
# Phi_r(t)

def _poisson_terms(r: int, K: int):
    base = -math.lgamma(r + 1)
    terms = [(r + i, base - math.lgamma(i + 1), -1 if i % 2 else 1) for i in range(K)]
    return terms, [(r + K, base - math.lgamma(K + 1))]


def _poisson_head(r: int, log_t: float):
    lr = math.lgamma(r + 1)

    def head(log_m, log_p):
        lx = log_t + log_p
        with np.errstate(over="ignore"):
            x = np.exp(lx)
        lterm = log_m + r * lx - x - lr
        with np.errstate(over="ignore"):
            return float(np.sum(np.exp(lterm)))

    return head


def phi(view: FrequencyView, r: int, t: Optional[float] = None, tol: float = 1e-9, *,
        log_t: Optional[float] = None, strict: bool = True, log_unit: float = 0.0) -> Certified:
    """Phi_r(t) = E Y_r(t) = sum_j exp(-t p_j) (t p_j)^r / r!."""
    if r < 1:
        raise ValueError("r must be >= 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    lt = _log_t(t, log_t)
    if lt == NEG_INF:
        return Certified(0.0, 0.0)
    return _adaptive(view, lt, tol, _poisson_head(r, lt), lambda K: _poisson_terms(r, K),
                     f"Phi_{r}", strict, unit=log_unit)


def _log1mexp(lx: np.ndarray) -> np.ndarray:
    """log(1 - exp(-x)) given log x; stays finite when x itself underflows."""
    with np.errstate(over="ignore"):
        x = np.exp(lx)
    out = np.empty_like(x)
    small = lx < math.log(1e-8)
    out[small] = lx[small] - x[small] / 2
    big = ~small
    with np.errstate(divide="ignore"):
        out[big] = np.log(-np.expm1(-x[big]))
    return out


def phi_occupied(view: FrequencyView, t: Optional[float] = None, tol: float = 1e-9, *,
                 log_t: Optional[float] = None, strict: bool = True, log_unit: float = 0.0) -> Certified:
    """Phi(t) = sum_j (1 - exp(-t p_j)), the mean number of occupied boxes."""
    lt = _log_t(t, log_t)
    if lt == NEG_INF:
        return Certified(0.0, 0.0)

    def head(log_m, log_p):
        return float(np.sum(np.exp(log_m + _log1mexp(lt + log_p))))

    def terms(K):
        ts = [(k, -math.lgamma(k + 1), 1 if k % 2 else -1) for k in range(1, K + 1)]
        return ts, [(K + 1, -math.lgamma(K + 2))]

    return _adaptive(view, lt, tol, head, terms, "Phi", strict, unit=log_unit)


def occupied_variance(view: FrequencyView, t: Optional[float] = None, tol: float = 1e-9, *,
                      log_t: Optional[float] = None, strict: bool = True, log_unit: float = 0.0) -> Certified:
    """V(t) = sum_j u_j (1 - u_j), u_j = 1 - exp(-t p_j)."""
    lt = _log_t(t, log_t)
    if lt == NEG_INF:
        return Certified(0.0, 0.0)

    def head(log_m, log_p):
        lx = lt + log_p
        with np.errstate(over="ignore"):
            x = np.exp(lx)
        return float(np.sum(np.exp(log_m - x + _log1mexp(lx))))

    def terms(K):
        # e^{-x} - e^{-2x} = sum_{k>=1} (-1)^{k+1} (2^k - 1) x^k / k!
        ts = [(k, math.log(2.0 ** k - 1) - math.lgamma(k + 1), 1 if k % 2 else -1)
              for k in range(1, K + 1)]
        return ts, [(K + 1, math.log(1 + 2.0 ** (K + 1)) - math.lgamma(K + 2))]

    return _adaptive(view, lt, tol, head, terms, "V", strict, unit=log_unit)


# ---------------------------------------------------------------------------
# variances and covariances

def _square_coef(r: int) -> float:
    """C(2r, r) 4^{-r}: p_{j,r}(t)^2 = coef * p_{j,2r}(2t)."""
    return math.exp(log_comb(2 * r, r) - 2 * r * math.log(2.0))


def _variance_direct(view: FrequencyView, r: int, lt: float, tol: float, strict: bool,
                     log_unit: float = 0.0) -> Certified:
    lr = math.lgamma(r + 1)
    coef = _square_coef(r)
    lcoef = math.log(coef)

    def head(log_m, log_p):
        lx = lt + log_p
        with np.errstate(over="ignore"):
            x = np.exp(lx)
        lpr = r * lx - x - lr
        pr = np.exp(lpr)
        return float(np.sum(np.exp(log_m + lpr) * (1.0 - pr)))

    def terms(K):
        # tail of p_r - p_r^2; p_r^2 expanded through (2x)^{2r+i}/((2r)! i!)
        ts, rem = _poisson_terms(r, K)
        l2 = math.log(2.0)
        sq = [(2 * r + i, lcoef + (2 * r + i) * l2 - math.lgamma(2 * r + 1) - math.lgamma(i + 1),
               1 if i % 2 else -1) for i in range(K)]
        rem2 = (2 * r + K, lcoef + (2 * r + K) * l2 - math.lgamma(2 * r + 1) - math.lgamma(K + 1))
        return ts + sq, rem + [rem2]

    return _adaptive(view, lt, tol, head, terms, f"V_{r}", strict, unit=log_unit)


def variance(view: FrequencyView, r: int, t: Optional[float] = None, tol: float = 1e-9, *,
             log_t: Optional[float] = None, strict: bool = True, check: bool = True,
             log_unit: float = 0.0) -> Certified:
    """V_r(t) = Var Y_r(t), from the Bernoulli form sum_j p_{j,r}(1 - p_{j,r}).

    With ``check`` the identity V_r(t) = Phi_r(t) - C(2r,r) 4^{-r} Phi_{2r}(2t)
    is evaluated as well and the two must agree within their certificates.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    lt = _log_t(t, log_t)
    if lt == NEG_INF:
        return Certified(0.0, 0.0)
    direct = _variance_direct(view, r, lt, tol, strict, log_unit)
    if check:
        alt = variance_identity(view, r, log_t=lt, tol=tol, strict=strict, log_unit=log_unit)
        slack = direct.cert + alt.cert + 1e-11 * max(1.0, abs(phi(view, r, log_t=lt, tol=tol, strict=False,
                                                                  log_unit=log_unit).value))
        if abs(direct.value - alt.value) > slack:
            raise AssertionError(
                f"variance forms disagree for r={r}: {direct.value!r} vs {alt.value!r}")
    return direct


def variance_identity(view: FrequencyView, r: int, t: Optional[float] = None, tol: float = 1e-9, *,
                      log_t: Optional[float] = None, strict: bool = True, log_unit: float = 0.0) -> Certified:
    """V_r(t) through Phi_r(t) - C(2r, r) 4^{-r} Phi_{2r}(2t)."""
    lt = _log_t(t, log_t)
    if lt == NEG_INF:
        return Certified(0.0, 0.0)
    coef = _square_coef(r)
    a = phi(view, r, log_t=lt, tol=tol / 2, strict=strict, log_unit=log_unit)
    b = phi(view, 2 * r, log_t=lt + math.log(2.0), tol=tol / (2 * coef), strict=strict, log_unit=log_unit)
    return a - b.scaled(coef)


def covariance(view: FrequencyView, r: int, s: int, t: Optional[float] = None, tol: float = 1e-9, *,
               log_t: Optional[float] = None, strict: bool = True, log_unit: float = 0.0) -> Certified:
    """C_rs(t) = -2^{-r-s} C(r+s, r) Phi_{r+s}(2t), r != s."""
    if r == s:
        raise ValueError("covariance needs r != s; use variance for r == s")
    if r < 1 or s < 1:
        raise ValueError("r and s must be >= 1")
    lt = _log_t(t, log_t)
    if lt == NEG_INF:
        return Certified(0.0, 0.0)
    coef = math.exp(log_comb(r + s, r) - (r + s) * math.log(2.0))
    val = phi(view, r + s, log_t=lt + math.log(2.0), tol=tol / coef, strict=strict, log_unit=log_unit)
    return val.scaled(-coef)


# ---------------------------------------------------------------------------
# correlation matrix

def c_floor(R: Sequence[int]) -> float:
    """c_R = min(e^{-1}, P(Poisson(1) >= max(R) + 1))."""
    rm = max(R)
    q = float(special.gammainc(rm + 1, 1.0))  # P(Poisson(1) > rm)
    return min(math.exp(-1.0), q)


@dataclass
class CovMatrix:
    R: tuple[int, ...]
    t: float
    matrix: np.ndarray
    variances: tuple[float, ...]
    cert: float = 0.0

    @property
    def eigmin(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])

    @property
    def c_floor(self) -> float:
        return c_floor(self.R)

    def to_dict(self) -> dict:
        return {"R": list(self.R), "t": self.t, "matrix": self.matrix.tolist(),
                "variances": list(self.variances), "eigmin": self.eigmin, "c_R": self.c_floor}


def _check_index_set(R: Sequence[int]) -> tuple[int, ...]:
    R = tuple(int(r) for r in R)
    if not R or R[0] < 1 or any(b <= a for a, b in zip(R, R[1:])):
        raise ValueError("R must be a nonempty strictly increasing set of integers >= 1")
    return R


def corr_matrix(view: FrequencyView, R: Sequence[int], t: Optional[float] = None, tol: float = 1e-9, *,
                log_t: Optional[float] = None, strict: bool = True, log_unit: float = 0.0) -> CovMatrix:
    """Sigma_R(t): C_rs / sqrt(V_r V_s), with unit diagonal.

    The degeneracy floor applies to variances divided by exp(log_unit).
    """
    R = _check_index_set(R)
    lt = _log_t(t, log_t)
    var = []
    for r in R:
        v = variance(view, r, log_t=lt, tol=tol, strict=strict, check=False, log_unit=log_unit)
        if v.value < DEGENERATE_VAR:
            raise DegenerateVarianceError(r, v.value)
        var.append(v)
    m = len(R)
    mat = np.eye(m)
    cert = 0.0
    for a in range(m):
        for b in range(a + 1, m):
            c = covariance(view, R[a], R[b], log_t=lt, tol=tol, strict=strict, log_unit=log_unit)
            denom = math.sqrt(var[a].value * var[b].value)
            mat[a, b] = mat[b, a] = c.value / denom
            cert = max(cert, c.cert / denom + abs(c.value) / denom
                       * (var[a].cert / var[a].value + var[b].cert / var[b].value))
    tval = math.exp(lt) if lt < 709 else math.inf
    return CovMatrix(R, tval, mat, tuple(v.value for v in var), cert)


# ---------------------------------------------------------------------------
# fixed-n cross-check

def binomial_mean(view: FrequencyView, n: int, r: int, tol: float = 1e-9, *,
                  strict: bool = True) -> Certified:
    """E X_{n,r} = sum_j C(n,r) p_j^r (1-p_j)^{n-r}.

    The tail uses the Bonferroni truncations of (1-p)^{n-r}, which bracket it
    alternately, so the next binomial term bounds the error.
    """
    if not 0 <= r <= n:
        raise ValueError("need 0 <= r <= n")
    if r == 0 and view.n_atoms is None:
        raise ValueError("infinitely many empty boxes: r = 0 needs finite support")
    if view.subprobability:
        raise ValueError("fixed-n quantities need a probability vector, not a subprobability")
    lc = log_comb(n, r)

    def head(log_m, log_p):
        p = np.exp(log_p)
        with np.errstate(divide="ignore"):
            # (1-p)^0 is 1 even for p = 1
            lq = (n - r) * np.log1p(-p) if n > r else np.zeros_like(p)
            lterm = log_m + lc + r * log_p + lq
        with np.errstate(over="ignore"):
            return float(np.sum(np.exp(lterm)))

    def terms(K):
        ts = [(r + k, lc + log_comb(n - r, k), -1 if k % 2 else 1) for k in range(min(K, n - r + 1))]
        if K > n - r:
            return ts, []
        return ts, [(r + K, lc + log_comb(n - r, K))]

    return _adaptive(view, 0.0, tol, head, terms, f"E X_{{n,{r}}}", strict) if n > 0 else Certified(0.0, 0.0)


# ---------------------------------------------------------------------------
# tables

@dataclass
class MomentEntry:
    t: float
    r: int
    phi: float
    var: float
    cert: float


@dataclass
class PairEntry:
    t: float
    r: int
    s: int
    cov: float
    corr: float
    cert: float


@dataclass
class MomentTable:
    ts: list[float]
    rs: list[int]
    entries: list[MomentEntry] = field(default_factory=list)
    pairs: list[PairEntry] = field(default_factory=list)
    tol: float = 1e-9

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "r", "phi", "var", "cert"])
        for e in self.entries:
            w.writerow([repr(e.t), e.r, repr(e.phi), repr(e.var), repr(e.cert)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "tol": self.tol,
            "t": self.ts,
            "r": self.rs,
            "entries": [vars(e) for e in self.entries],
            "pairs": [vars(p) for p in self.pairs],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def moment_table(view: FrequencyView, rs: Iterable[int], ts: Iterable[float], tol: float = 1e-9,
                 pairs: bool = True) -> MomentTable:
    rs = sorted(set(int(r) for r in rs))
    ts = [float(t) for t in ts]
    table = MomentTable(ts, rs, tol=tol)
    for t in ts:
        var = {}
        for r in rs:
            p = phi(view, r, t, tol)
            v = variance(view, r, t, tol)
            var[r] = v
            table.entries.append(MomentEntry(t, r, p.value, v.value, max(p.cert, v.cert)))
        if pairs:
            for i, r in enumerate(rs):
                for s in rs[i + 1:]:
                    c = covariance(view, r, s, t, tol)
                    denom = math.sqrt(var[r].value * var[s].value)
                    corr = c.value / denom if denom > 0 else math.nan
                    table.pairs.append(PairEntry(t, r, s, c.value, corr, c.cert))
    return table
