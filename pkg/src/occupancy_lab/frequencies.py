"""Frequency models p_1 >= p_2 >= ... > 0 with certified tails.

Every view exposes the same small surface used downstream:

* ``prob(j)`` / ``log_prob(j)`` and vectorized ``probs(start, stop)``;
* ``log_power_tail(k, s)``: an interval ``(lo, hi)`` of natural logs enclosing
  ``sum_{i>k} p_i**s`` (``lo == hi`` when a closed form exists);
* ``tail_bound(k, r)``: an upper bound on the same sum plus an exactness flag;
* the *atom* interface used by the moment sums.  An atom is a single box for
  sequence families and a whole block of equal frequencies for block families.

Block families are held in natural-log space throughout, since their levels
underflow doubles after a handful of blocks.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Any, Optional, Sequence

import mpmath
import numpy as np
from scipy import special

LN2 = math.log(2.0)
NEG_INF = -math.inf

FAMILIES = ("geometric", "power_law", "stretched_exp", "poisson_weights", "blocks", "explicit")
BLOCK_RULES = ("karlin_ex1", "bgy_ex2", "genex", "factorial", "explicit")

# Largest admissible log2(m_i) for generated blocks.
MAX_LOG2_BLOCK = 4096
# Relative width below which a refined tail interval is accepted.
TAIL_RTOL = 1e-15


class FrequencyError(ValueError):
    """Invalid frequency specification."""


def _logaddexp_many(values: Sequence[float]) -> float:
    vals = [v for v in values if v != NEG_INF]
    if not vals:
        return NEG_INF
    return float(special.logsumexp(vals))


@dataclass(frozen=True)
class FrequencySpec:
    """Serializable description of a frequency model.

    JSON form is ``{"family": ..., <params>}``; only the fields relevant to
    the family are emitted.
    """

    family: str
    q: Optional[float] = None
    exponent: Optional[float] = None
    prefactor: Optional[float] = None
    beta: Optional[float] = None
    alpha: Optional[float] = None
    lam: Optional[float] = None
    rule: Optional[str] = None
    blocks: Optional[tuple[tuple[int, float], ...]] = None
    p: Optional[tuple[float, ...]] = None
    subprobability: bool = False

    @classmethod
    def geometric(cls, q: float) -> "FrequencySpec":
        return cls("geometric", q=q)

    @classmethod
    def power_law(cls, exponent: float, prefactor: Optional[float] = None, **kw) -> "FrequencySpec":
        return cls("power_law", exponent=exponent, prefactor=prefactor, **kw)

    @classmethod
    def stretched_exp(cls, beta: float) -> "FrequencySpec":
        return cls("stretched_exp", beta=beta)

    @classmethod
    def poisson_weights(cls, lam: float) -> "FrequencySpec":
        return cls("poisson_weights", lam=lam)

    @classmethod
    def explicit(cls, p: Sequence[float], **kw) -> "FrequencySpec":
        return cls("explicit", p=tuple(float(x) for x in p), **kw)

    @classmethod
    def block_rule(cls, rule: str, *, beta: Optional[float] = None, alpha: Optional[float] = None,
                   blocks: Optional[Sequence[tuple[int, float]]] = None, **kw) -> "FrequencySpec":
        if blocks is not None:
            blocks = tuple((int(m), float(qv)) for m, qv in blocks)
        return cls("blocks", rule=rule, beta=beta, alpha=alpha, blocks=blocks, **kw)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for key, value in asdict(self).items():
            if value is None or (key == "subprobability" and not value):
                continue
            if key == "blocks":
                value = [[int(m), float(qv)] for m, qv in value]
            elif key == "p":
                value = list(value)
            out[key] = value
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "FrequencySpec":
        data = dict(data)
        if "family" not in data:
            raise FrequencyError("frequency spec needs a 'family' field")
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise FrequencyError(f"unknown frequency spec fields: {sorted(unknown)}")
        if data.get("blocks") is not None:
            data["blocks"] = tuple((int(m), float(qv)) for m, qv in data["blocks"])
        if data.get("p") is not None:
            data["p"] = tuple(float(x) for x in data["p"])
        return cls(**data)


class FrequencyView:
    """Resolved, immutable frequency model.  Subclasses fill in the family."""

    is_blocks = False

    def __init__(self, spec: FrequencySpec, norm: float):
        self.spec = spec
        self.norm = norm
        self.subprobability = spec.subprobability

    # -- identity ------------------------------------------------------
    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.spec.to_dict()})"

    def __hash__(self) -> int:
        return hash(self.spec)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, FrequencyView) and other.spec == self.spec

    # -- required per family -------------------------------------------
    support_size: Optional[int] = None

    def log_prob(self, j: int) -> float:
        raise NotImplementedError

    def log_probs(self, start: int, stop: int) -> np.ndarray:
        raise NotImplementedError

    def log_power_tail(self, k: int, s: float) -> tuple[float, float]:
        raise NotImplementedError

    # -- derived -------------------------------------------------------
    def prob(self, j: int) -> float:
        if j < 1:
            raise IndexError("box indices start at 1")
        if self.support_size is not None and j > self.support_size:
            return 0.0
        return math.exp(self.log_prob(j))

    def probs(self, start: int, stop: int) -> np.ndarray:
        """p_j for start <= j < stop."""
        return np.exp(self.log_probs(start, stop))

    def power_tail(self, k: int, s: float) -> float:
        """Midpoint estimate of sum_{i>k} p_i**s."""
        lo, hi = self.log_power_tail(k, s)
        if hi == NEG_INF:
            return 0.0
        return 0.5 * (math.exp(lo) + math.exp(hi))

    def tail_bound(self, k: int, r: int = 1) -> tuple[float, bool]:
        lo, hi = self.log_power_tail(k, r)
        return (0.0 if hi == NEG_INF else math.exp(hi)), lo == hi

    def count_above(self, x: float) -> int:
        """#{j : p_j > x}, by monotone search."""
        if x <= 0:
            if self.support_size is None:
                raise ValueError("infinitely many boxes exceed 0")
            return self.support_size
        lx = math.log(x)
        if self.log_prob(1) <= lx:
            return 0
        lo, hi = 1, 2
        while True:
            if self.support_size is not None and hi >= self.support_size:
                hi = self.support_size
                if self.log_prob(hi) > lx:
                    return hi
                break
            if self.log_prob(hi) <= lx:
                break
            lo, hi = hi, hi * 2
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self.log_prob(mid) > lx:
                lo = mid
            else:
                hi = mid
        return lo

    # -- atom interface (sequence default: one atom per box) -----------
    @property
    def n_atoms(self) -> Optional[int]:
        return self.support_size

    def atoms(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """(log multiplicity, log p) for the first n atoms."""
        lp = self.log_probs(1, n + 1)
        return np.zeros_like(lp), lp

    def atom_boxes(self, n: int) -> int:
        return n

    def atom_tail_log_power(self, n: int, s: float) -> tuple[float, float]:
        return self.log_power_tail(self.atom_boxes(n), s)

    def head_atoms(self, log_scale: float, eps: float) -> int:
        """Number of leading atoms with scale * p >= eps."""
        n = self.count_above(eps * math.exp(-log_scale)) if log_scale < 700 else None
        if n is None:
            # scale overflows a double; search on logs instead
            n = self._count_above_log(math.log(eps) - log_scale)
        if self.support_size is not None:
            n = min(n, self.support_size)
        return n

    def _count_above_log(self, lx: float) -> int:
        if self.log_prob(1) <= lx:
            return 0
        lo, hi = 1, 2
        while self.log_prob(hi) > lx:
            lo, hi = hi, hi * 2
            if self.support_size is not None and hi >= self.support_size:
                return self.support_size
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self.log_prob(mid) > lx:
                lo = mid
            else:
                hi = mid
        return lo

    def total_mass(self) -> float:
        return self.power_tail(0, 1)

    def sample_beyond(self, k: int, size: int, rng: np.random.Generator) -> np.ndarray:
        """Box indices j > k drawn with probability p_j / sum_{i>k} p_i."""
        return _ChunkedTailSampler.get(self, k).draw(size, rng)


class _ChunkedTailSampler:
    """Inverse-CDF sampling of j > k from cumulative tables built in fixed chunks.

    Chunk boundaries depend only on k, so the tables (and hence the draws)
    do not depend on the order in which tails happen to be explored.
    """

    _cache: dict[tuple[int, int], "_ChunkedTailSampler"] = {}
    CHUNK = 4096
    MAX_BOXES = 10**8

    def __init__(self, view: FrequencyView, k: int):
        self.view = view
        self.k = k
        self.tail = view.power_tail(k, 1)
        self.bounds = [k]
        self.cums: list[np.ndarray] = []
        self.offsets = [0.0]

    @classmethod
    def get(cls, view: FrequencyView, k: int) -> "_ChunkedTailSampler":
        key = (hash(view), k)
        if key not in cls._cache:
            cls._cache[key] = cls(view, k)
        return cls._cache[key]

    def _extend(self) -> bool:
        start = self.bounds[-1]
        stop = start + self.CHUNK * (2 ** min(len(self.cums), 12))
        if self.view.support_size is not None:
            stop = min(stop, self.view.support_size)
        if stop <= start or stop - self.k > self.MAX_BOXES:
            return False
        cum = np.cumsum(self.view.probs(start + 1, stop + 1)) + self.offsets[-1]
        self.cums.append(cum)
        self.bounds.append(stop)
        self.offsets.append(float(cum[-1]))
        return True

    def draw(self, size: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(size) * self.tail
        out = np.empty(size, dtype=np.int64)
        for idx, ui in enumerate(u):
            c = 0
            while True:
                if c == len(self.cums) and not self._extend():
                    out[idx] = self.bounds[-1]
                    break
                if ui < self.offsets[c + 1]:
                    pos = int(np.searchsorted(self.cums[c], ui, side="right"))
                    out[idx] = self.bounds[c] + 1 + min(pos, len(self.cums[c]) - 1)
                    break
                c += 1
        return out


# ---------------------------------------------------------------------------
# sequence families

class GeometricView(FrequencyView):
    """p_j = c q**(j-1); c = 1 - q unless a prefactor is given."""

    def __init__(self, spec: FrequencySpec):
        q = spec.q
        if q is None or not 0 < q < 1:
            raise FrequencyError("geometric ratio q must lie in (0, 1)")
        c = 1.0 - q if spec.prefactor is None else spec.prefactor
        super().__init__(spec, c)
        self.q = q
        self._lq = math.log(q)
        self._lc = math.log(c)
        _check_mass(self, c / (1 - q))

    def log_prob(self, j: int) -> float:
        return self._lc + (j - 1) * self._lq

    def log_probs(self, start: int, stop: int) -> np.ndarray:
        j = np.arange(start, stop, dtype=np.float64)
        return self._lc + (j - 1) * self._lq

    def log_power_tail(self, k: int, s: float) -> tuple[float, float]:
        v = s * self._lc + s * k * self._lq - math.log1p(-self.q ** s)
        return v, v

    def count_above(self, x: float) -> int:
        if x >= self.norm:
            return 0
        n = int(math.floor(1 + math.log(x / self.norm) / self._lq))
        # guard the floor against rounding at exact powers
        while n >= 1 and self.log_prob(n) <= math.log(x):
            n -= 1
        while self.log_prob(n + 1) > math.log(x):
            n += 1
        return max(n, 0)

    def sample_beyond(self, k: int, size: int, rng: np.random.Generator) -> np.ndarray:
        return k + rng.geometric(1.0 - self.q, size=size).astype(np.int64)


class PowerLawView(FrequencyView):
    """p_j = c j**(-exponent), c = 1/zeta(exponent) unless a prefactor is given."""

    def __init__(self, spec: FrequencySpec):
        a = spec.exponent
        if a is None or not a > 1:
            raise FrequencyError("power-law exponent must exceed 1")
        z = float(special.zeta(a))
        c = 1.0 / z if spec.prefactor is None else spec.prefactor
        if c <= 0:
            raise FrequencyError("prefactor must be positive")
        super().__init__(spec, c)
        self.a = a
        self._lc = math.log(c)
        _check_mass(self, c * z)

    def log_prob(self, j: int) -> float:
        return self._lc - self.a * math.log(j)

    def log_probs(self, start: int, stop: int) -> np.ndarray:
        j = np.arange(start, stop, dtype=np.float64)
        return self._lc - self.a * np.log(j)

    def log_power_tail(self, k: int, s: float) -> tuple[float, float]:
        v = s * self._lc + _log_hurwitz(self.a * s, k + 1)
        return v, v

    def tail_bound(self, k: int, r: int = 1) -> tuple[float, bool]:
        # integral comparison: sum_{i>k} i^{-ra} <= k^{1-ra}/(ra-1)
        ra = r * self.a
        cr = self.norm ** r
        if k == 0:
            return cr * (1.0 + 1.0 / (ra - 1.0)), False
        return cr * k ** (1.0 - ra) / (ra - 1.0), False

    def count_above(self, x: float) -> int:
        if x >= self.norm:
            return 0
        lx = math.log(x)
        est = math.exp((self._lc - lx) / self.a)  # float guess, relative error ~1e-15
        lo, hi = max(int(est * (1 - 1e-9)) - 1, 0), int(est * (1 + 1e-9)) + 2
        while lo > 0 and self.log_prob(lo) <= lx:
            lo //= 2
        while self.log_prob(hi) > lx:
            hi *= 2
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self.log_prob(mid) > lx:
                lo = mid
            else:
                hi = mid
        return lo

    def sample_beyond(self, k: int, size: int, rng: np.random.Generator) -> np.ndarray:
        # Pareto proposal on [k, inf) rounded up, thinned to the exact masses.
        a = self.a
        if k == 0:
            first = rng.random(size) * self.power_tail(0, 1) < self.norm
            out = self.sample_beyond(1, size, rng).astype(np.float64)
            out[first] = 1.0
            return out.astype(np.int64) if out.max() < 2.0 ** 62 else out
        out = np.empty(size, dtype=np.float64)
        filled = 0
        while filled < size:
            need = size - filled
            u = rng.random(need)
            v = rng.random(need)
            y = k * (1.0 - u) ** (-1.0 / (a - 1.0))
            j = np.maximum(np.ceil(y), k + 1.0)
            lo_edge = np.maximum(j - 1.0, float(k))
            cell = (lo_edge ** (1.0 - a) - j ** (1.0 - a)) / (a - 1.0)
            accept = v * cell <= j ** (-a)
            got = j[accept]
            out[filled:filled + got.size] = got
            filled += got.size
        if out.max(initial=0.0) < 2.0 ** 62:
            return out.astype(np.int64)
        return out


@lru_cache(maxsize=8192)
def _log_hurwitz(s: float, q: int) -> float:
    with mpmath.workdps(25):
        return float(mpmath.log(mpmath.zeta(s, q)))


def _log_upper_gamma(a: float, x: float) -> tuple[float, float]:
    """Interval for log Gamma(a, x), a >= 1."""
    val = float(special.gammaincc(a, x)) if x < 600 else 0.0
    if val > 1e-280:
        v = math.log(val) + special.gammaln(a)
        return v, v
    base = (a - 1.0) * math.log(x) - x
    hi = base - math.log1p(-(a - 1.0) / x) if x > 2 * (a - 1.0) else base + math.log(2.0) + 50.0
    return base, hi


class _RefinedTail:
    """Mixin: tail sums by explicit chunks plus a crude remainder interval."""

    def _crude_tail(self, k: int, s: float) -> tuple[float, float]:
        raise NotImplementedError

    def _refined_log_power_tail(self, k: int, s: float) -> tuple[float, float]:
        acc = NEG_INF
        start = k
        chunk = 1024
        for _ in range(64):
            lo, hi = self._crude_tail(start, s)
            if hi == NEG_INF:
                return acc, acc
            total_lo = np.logaddexp(acc, lo)
            if hi - total_lo < math.log(TAIL_RTOL) or start - k > 10**7:
                return float(np.logaddexp(acc, lo)), float(np.logaddexp(acc, hi))
            stop = start + chunk
            if self.support_size is not None:
                stop = min(stop, self.support_size)
            terms = s * self.log_probs(start + 1, stop + 1)
            acc = float(np.logaddexp(acc, special.logsumexp(terms)))
            start = stop
            chunk *= 2
        lo, hi = self._crude_tail(start, s)
        return float(np.logaddexp(acc, lo)), float(np.logaddexp(acc, hi))


class StretchedExpView(_RefinedTail, FrequencyView):
    """p_j = c exp(-j**beta), 0 < beta < 1."""

    def __init__(self, spec: FrequencySpec):
        b = spec.beta
        if b is None or not 0 < b < 1:
            raise FrequencyError("stretched-exponential beta must lie in (0, 1)")
        self.b = b
        total = _stretched_sum(b)
        c = 1.0 / total if spec.prefactor is None else spec.prefactor
        super().__init__(spec, c)
        self._lc = math.log(c)
        _check_mass(self, c * total)

    def log_prob(self, j: int) -> float:
        return self._lc - float(j) ** self.b

    def log_probs(self, start: int, stop: int) -> np.ndarray:
        j = np.arange(start, stop, dtype=np.float64)
        return self._lc - j ** self.b

    def _crude_tail(self, k: int, s: float) -> tuple[float, float]:
        # sum_{j>k} e^{-s j^b} lies in [I, f(k+1) + I], I = int_{k+1}^inf e^{-s x^b} dx
        a = 1.0 / self.b
        x0 = s * (k + 1.0) ** self.b
        glo, ghi = _log_upper_gamma(a, x0)
        pre = -math.log(self.b) - a * math.log(s)
        lo = s * self._lc + pre + glo
        hi = s * self._lc + float(np.logaddexp(pre + ghi, -x0))
        return lo, hi

    def log_power_tail(self, k: int, s: float) -> tuple[float, float]:
        return self._refined_log_power_tail(k, s)


@lru_cache(maxsize=64)
def _stretched_sum(b: float) -> float:
    """sum_{j>=1} exp(-j**b) via direct summation plus Euler-Maclaurin tail."""
    J = int(min(2_000_000, max(1000.0, (60.0) ** (1.0 / b))))
    j = np.arange(1, J + 1, dtype=np.float64)
    head = math.fsum(np.exp(-j ** b))
    xJ = J ** b
    if xJ > 700:
        return head
    a = 1.0 / b
    integral = float(special.gammaincc(a, xJ) * special.gamma(a)) / b
    f = math.exp(-xJ)
    fp = -b * J ** (b - 1.0) * f
    return head + integral - f / 2.0 - fp / 12.0


class PoissonWeightsView(_RefinedTail, FrequencyView):
    """Frequencies proportional to lam**k / k!, k >= 1, arranged in decreasing order.

    For lam > 2 the natural order is not monotone; the leading values up to
    the point where the natural order becomes decreasing and smaller than
    everything before it are sorted, and the rest stay in natural order.
    """

    def __init__(self, spec: FrequencySpec):
        lam = spec.lam
        if lam is None or not lam > 0:
            raise FrequencyError("Poisson weight parameter lam must be positive")
        self.lam = lam
        c = 1.0 / math.expm1(lam) if spec.prefactor is None else spec.prefactor
        super().__init__(spec, c)
        self._lc = math.log(c)
        self._llam = math.log(lam)
        first = self._natural(1)
        mode = max(1, int(math.floor(lam)))
        K = mode + 1
        while self._natural(K) >= first:
            K += 1
        head = sorted((self._natural(k) for k in range(1, K)), reverse=True)
        self._head = np.array(head)
        self._K = K
        _check_mass(self, c * math.expm1(lam))

    def _natural(self, k: int) -> float:
        return self._lc + k * self._llam - math.lgamma(k + 1)

    def log_prob(self, j: int) -> float:
        h = len(self._head)
        if j <= h:
            return float(self._head[j - 1])
        return self._natural(self._K + j - h - 1)

    def log_probs(self, start: int, stop: int) -> np.ndarray:
        h = len(self._head)
        j = np.arange(start, stop)
        out = np.empty(j.size)
        mask = j <= h
        out[mask] = self._head[j[mask] - 1]
        k = (self._K + j[~mask] - h - 1).astype(np.float64)
        out[~mask] = self._lc + k * self._llam - special.gammaln(k + 1)
        return out

    def _crude_tail(self, k: int, s: float) -> tuple[float, float]:
        h = len(self._head)
        if k < h:
            return 0.0, math.inf  # forces explicit summation through the head
        nat = self._K + k - h  # natural index of box k+1
        first = s * self._natural(nat)
        ratio = (self.lam / (nat + 1.0)) ** s
        return first, first - math.log1p(-ratio)

    def log_power_tail(self, k: int, s: float) -> tuple[float, float]:
        return self._refined_log_power_tail(k, s)


class ExplicitView(FrequencyView):
    """Finite nonincreasing list; boxes beyond the list have probability 0."""

    def __init__(self, spec: FrequencySpec):
        p = spec.p
        if not p:
            raise FrequencyError("explicit list must be nonempty")
        arr = np.asarray(p, dtype=np.float64)
        if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
            raise FrequencyError("explicit frequencies must be positive and finite")
        if np.any(np.diff(arr) > 0):
            raise FrequencyError("explicit frequencies must be nonincreasing")
        super().__init__(spec, 1.0)
        self.p = arr
        self.support_size = arr.size
        self._lp = np.log(arr)
        _check_mass(self, math.fsum(arr))

    def log_prob(self, j: int) -> float:
        if j > self.support_size:
            return NEG_INF
        return float(self._lp[j - 1])

    def log_probs(self, start: int, stop: int) -> np.ndarray:
        j = np.arange(start, stop)
        out = np.full(j.size, NEG_INF)
        mask = j <= self.support_size
        out[mask] = self._lp[j[mask] - 1]
        return out

    def log_power_tail(self, k: int, s: float) -> tuple[float, float]:
        if k >= self.support_size:
            return NEG_INF, NEG_INF
        v = float(special.logsumexp(s * self._lp[k:]))
        return v, v

    def sample_beyond(self, k: int, size: int, rng: np.random.Generator) -> np.ndarray:
        w = self.p[k:]
        return k + 1 + rng.choice(w.size, size=size, p=w / w.sum())


# ---------------------------------------------------------------------------
# block families

class BlocksView(FrequencyView):
    """Blocks of m_i boxes sharing the level q_i, stored as logs.

    ``mult`` holds the exact block sizes as Python ints and ``cum`` the
    cumulative sizes M_i.  Factorial blocks are capped like the others but
    keep a closed-form remainder for the blocks beyond the cap.
    """

    is_blocks = True

    def __init__(self, spec: FrequencySpec):
        rule = spec.rule
        if rule not in BLOCK_RULES:
            raise FrequencyError(f"unknown block rule {rule!r}; expected one of {BLOCK_RULES}")
        builder = getattr(self, f"_build_{rule}")
        mult, log_q_raw, index0 = builder(spec)
        log_m = np.array([_log_int(m) for m in mult])
        log_q_raw = np.asarray(log_q_raw, dtype=np.float64)
        self._remainder = rule == "factorial"
        if rule == "factorial":
            norm = 1.0
        elif rule == "explicit" and spec.subprobability:
            norm = 1.0
        else:
            norm = math.exp(-float(special.logsumexp(log_m + log_q_raw)))
        super().__init__(spec, norm)
        if np.any(np.diff(log_q_raw) > 0):
            raise FrequencyError("block levels must be nonincreasing")
        self.mult = mult
        self.log_m = log_m
        self.log_q = log_q_raw + math.log(norm)
        self.index0 = index0  # paper index of the first block
        self.cum = list(_cumsum_int(mult))
        self.support_size = None if self._remainder else self.cum[-1]
        mass = math.exp(float(special.logsumexp(self.log_m + self.log_q)))
        if self._remainder:
            mass += 1.0 / self.last_block_index
        _check_mass(self, mass)

    # -- builders return (sizes, raw log levels, first paper index) ----
    @staticmethod
    def _build_karlin_ex1(spec):
        # m_i = i, q_i ~ 2^{-2^i}; capped where 2^i exceeds the block budget
        imax = int(math.log2(2 * MAX_LOG2_BLOCK))
        mult = list(range(1, imax + 1))
        lq = [-(2.0 ** i) * LN2 for i in range(1, imax + 1)]
        return mult, lq, 1

    @staticmethod
    def _build_bgy_ex2(spec):
        # m_i = 2^{2^i}, q_i ~ 2^{-2^{i+1}}
        imax = int(math.log2(MAX_LOG2_BLOCK))
        mult = [1 << (1 << i) for i in range(1, imax + 1)]
        lq = [-(2.0 ** (i + 1)) * LN2 for i in range(1, imax + 1)]
        return mult, lq, 1

    @staticmethod
    def _build_genex(spec):
        b, a = spec.beta, spec.alpha
        if b is None or not 0 < b < 1:
            raise FrequencyError("genex beta must lie in (0, 1)")
        if a is None or not a > 0:
            raise FrequencyError("genex alpha must be positive")
        mult = []
        with mpmath.workdps(40):
            i = 1
            while True:
                x = mpmath.mpf(1 - mpmath.mpf(b)) ** (-i)
                if x > MAX_LOG2_BLOCK:
                    break
                with mpmath.workprec(int(x) + 80):
                    m = int(mpmath.floor(mpmath.power(2, x)))
                mult.append(m)
                i += 1
        if not mult:
            raise FrequencyError("genex parameters leave no representable block")
        lq = [-(1.0 + a) * _log_int(m) for m in mult]
        return mult, lq, 1

    @staticmethod
    def _build_factorial(spec):
        # q_i = 1/i!, m_i = (i-2)!, i >= 2: sum m_i q_i telescopes to 1
        mult, lq = [], []
        i = 2
        while True:
            m = math.factorial(i - 2)
            if m.bit_length() - 1 > MAX_LOG2_BLOCK:
                break
            mult.append(m)
            lq.append(-math.lgamma(i + 1))
            i += 1
        return mult, lq, 2

    @staticmethod
    def _build_explicit(spec):
        if not spec.blocks:
            raise FrequencyError("explicit block rule needs a nonempty 'blocks' list")
        mult, lq = [], []
        for m, qv in spec.blocks:
            if m < 1 or not qv > 0:
                raise FrequencyError("blocks need m >= 1 and q > 0")
            mult.append(int(m))
            lq.append(math.log(qv))
        return mult, lq, 1

    # -- block bookkeeping ---------------------------------------------
    @property
    def n_blocks(self) -> int:
        return len(self.mult)

    @property
    def last_block_index(self) -> int:
        return self.index0 + self.n_blocks - 1

    def block_of(self, j: int) -> int:
        """0-based block containing box j (may be n_blocks for the remainder)."""
        return bisect.bisect_left(self.cum, j)

    def level(self, i: int) -> float:
        """Level q of 0-based block i, as a log."""
        return float(self.log_q[i])

    def log_prob(self, j: int) -> float:
        b = self.block_of(j)
        if b < self.n_blocks:
            return float(self.log_q[b])
        if not self._remainder:
            return NEG_INF
        idx = self._factorial_index_of(j)
        return -math.lgamma(idx + 1)

    def _factorial_index_of(self, j: int) -> int:
        i, total = self.last_block_index, self.cum[-1]
        while total < j:
            i += 1
            total += math.factorial(i - 2)
        return i

    def log_probs(self, start: int, stop: int) -> np.ndarray:
        out = np.empty(max(stop - start, 0))
        j = start
        while j < stop:
            b = self.block_of(j)
            if b >= self.n_blocks:
                out[j - start:] = [self.log_prob(x) for x in range(j, stop)]
                break
            end = min(stop, self.cum[b] + 1)
            out[j - start:end - start] = self.log_q[b]
            j = end
        return out

    def _remainder_log_power(self, s: float) -> tuple[float, float]:
        if not self._remainder:
            return NEG_INF, NEG_INF
        I = self.last_block_index
        if s == 1:
            v = -math.log(I)
            return v, v
        # first term (I-1)! / ((I+1)!)^s; later ratios are (i-1)/(i+1)^s <= 1/2
        first = math.lgamma(I) - s * math.lgamma(I + 2)
        return first, first + LN2

    def log_power_tail(self, k: int, s: float) -> tuple[float, float]:
        b = self.block_of(k + 1) if k >= 0 else 0
        terms = []
        if b < self.n_blocks:
            partial = self.cum[b] - k
            terms.append(_log_int(partial) + s * float(self.log_q[b]))
            if b + 1 < self.n_blocks:
                terms.append(float(special.logsumexp(self.log_m[b + 1:] + s * self.log_q[b + 1:])))
            rlo, rhi = self._remainder_log_power(s)
            head = _logaddexp_many(terms)
            return float(np.logaddexp(head, rlo)), float(np.logaddexp(head, rhi))
        # inside the factorial remainder
        I = self._factorial_index_of(k + 1)
        acc = []
        total = sum(math.factorial(i - 2) for i in range(self.last_block_index + 1, I + 1)) + self.cum[-1]
        acc.append(_log_int(total - k) - s * math.lgamma(I + 1))
        lo = hi = _logaddexp_many(acc)
        if s == 1:
            v = float(np.logaddexp(lo, -math.log(I)))
            return v, v
        first = math.lgamma(I) - s * math.lgamma(I + 2)
        return float(np.logaddexp(lo, first)), float(np.logaddexp(hi, first + LN2))

    def count_above(self, x: float) -> int:
        lx = math.log(x) if x > 0 else NEG_INF
        n = 0
        for b in range(self.n_blocks):
            if self.log_q[b] > lx:
                n = self.cum[b]
            else:
                return n
        if self._remainder and lx > NEG_INF:
            i = self.last_block_index + 1
            while -math.lgamma(i + 1) > lx:
                n += math.factorial(i - 2)
                i += 1
        return n

    # -- atoms are blocks ----------------------------------------------
    @property
    def n_atoms(self) -> int:
        return self.n_blocks

    def atoms(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        return self.log_m[:n], self.log_q[:n]

    def atom_boxes(self, n: int) -> int:
        return self.cum[n - 1] if n > 0 else 0

    def atom_tail_log_power(self, n: int, s: float) -> tuple[float, float]:
        if n >= self.n_blocks:
            return self._remainder_log_power(s)
        return self.log_power_tail(self.atom_boxes(n), s)

    def head_atoms(self, log_scale: float, eps: float) -> int:
        return self.n_blocks

    def sample_beyond(self, k: int, size: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError("block views are sampled block by block")

    def remainder_mass(self) -> float:
        return 1.0 / self.last_block_index if self._remainder else 0.0


def _log_int(m: int) -> float:
    if m <= 0:
        return NEG_INF
    if m < 2**1000:
        return math.log(m)
    shift = m.bit_length() - 64
    return math.log(m >> shift) + shift * LN2


def _cumsum_int(values):
    total = 0
    for v in values:
        total += v
        yield total


def _check_mass(view: FrequencyView, mass: float) -> None:
    if not math.isfinite(mass) or mass <= 0:
        raise FrequencyError("frequencies must have a positive finite sum")
    if view.subprobability:
        return
    if abs(mass - 1.0) > 1e-9:
        raise FrequencyError(
            f"frequencies sum to {mass!r}, not 1; pass subprobability=True for the Poisson-only mode")


_VIEWS = {
    "geometric": GeometricView,
    "power_law": PowerLawView,
    "stretched_exp": StretchedExpView,
    "poisson_weights": PoissonWeightsView,
    "explicit": ExplicitView,
    "blocks": BlocksView,
}


@lru_cache(maxsize=256)
def build_frequencies(spec: FrequencySpec) -> FrequencyView:
    """Resolve a spec into an immutable view (cached per spec)."""
    if spec.family not in _VIEWS:
        raise FrequencyError(f"unknown family {spec.family!r}; expected one of {FAMILIES}")
    return _VIEWS[spec.family](spec)


def prob(view: FrequencyView, j: int) -> float:
    return view.prob(j)


def tail_bound(view: FrequencyView, k: int, r: int = 1) -> tuple[float, bool]:
    """Upper bound on sum_{i>k} p_i**r and whether it is exact."""
    if k < 0 or r < 1:
        raise ValueError("need k >= 0 and r >= 1")
    return view.tail_bound(k, r)


def rho(view: FrequencyView, j: int, r: int) -> float:
    """rho_{j,r} = p_j^{-r} sum_{i>j} p_i^r."""
    if j < 1 or r < 1:
        raise ValueError("need j >= 1 and r >= 1")
    if view.support_size is not None and j >= view.support_size:
        return 0.0
    lo, hi = view.log_power_tail(j, r)
    if hi == NEG_INF:
        return 0.0
    mid = float(np.logaddexp(lo, hi)) - LN2
    return math.exp(mid - r * view.log_prob(j))


def log_rho(view: FrequencyView, j: int, r: int) -> float:
    """log rho_{j,r}; usable where rho itself overflows."""
    lo, hi = view.log_power_tail(j, r)
    if hi == NEG_INF:
        return NEG_INF
    return float(np.logaddexp(lo, hi)) - LN2 - r * view.log_prob(j)
