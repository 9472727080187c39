"""Exact Monte Carlo for the fixed-n and Poissonized occupancy schemes."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import threading
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .frequencies import FrequencyView
from .moments import DEGENERATE_VAR, DegenerateVarianceError, binomial_mean, phi, variance

R_CAP = 32
# boxes with t p_j (or n p_j) at least this large are drawn one by one
HEAD_RATE = 1.0
# refuse to simulate blocks needing more individual draws than this
MAX_DRAWS = 10**7
INT64_SAFE = 2**62
BALL_PATH = 1e4  # blocks expecting fewer balls are filled ball by ball


class SimulationError(RuntimeError):
    pass


def replicate_rng(seed: int, rep: int) -> np.random.Generator:
    """Philox stream keyed by (seed, replicate); independent of scheduling."""
    if not 0 <= seed < 2**64 or not 0 <= rep < 2**64:
        raise ValueError("seed and replicate index must fit in 64 bits")
    return np.random.Generator(np.random.Philox(key=np.array([seed, rep], dtype=np.uint64)))


_local = threading.local()


def _stream(seed: int, rep: int) -> np.random.Generator:
    """Same stream as replicate_rng, reusing one generator per thread."""
    g = getattr(_local, "gen", None)
    if g is None:
        g = _local.gen = np.random.Generator(np.random.Philox(key=np.zeros(2, dtype=np.uint64)))
    g.bit_generator.state = {
        "bit_generator": "Philox",
        "state": {"counter": np.zeros(4, dtype=np.uint64),
                  "key": np.array([seed, rep], dtype=np.uint64)},
        "buffer": np.zeros(4, dtype=np.uint64), "buffer_pos": 4,
        "has_uint32": 0, "uinteger": 0}
    return g


def thread_count(requested: Optional[int] = None) -> int:
    env = os.environ.get("OCCUPANCY_THREADS")
    cap = None
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            raise SimulationError(f"OCCUPANCY_THREADS must be an integer, got {env!r}") from None
    n = requested if requested is not None else (cap or 1)
    return max(1, min(n, cap) if cap else n)


# ---------------------------------------------------------------------------
# count vectors

@dataclass(frozen=True)
class CountVector:
    scheme: str  # "fixed_n" or "poissonized"
    size: float  # n or t
    counts: np.ndarray  # counts[r - 1] boxes with exactly r balls, r <= r_cap
    overflow_boxes: int
    overflow_balls: int
    total_balls: int
    prefix: int  # boxes drawn individually
    tail_balls: int  # balls placed beyond the prefix

    @property
    def r_cap(self) -> int:
        return len(self.counts)

    @property
    def occupied(self) -> int:
        return int(self.counts.sum()) + self.overflow_boxes

    def count(self, r: int) -> int:
        if not 1 <= r <= self.r_cap:
            raise ValueError(f"r must lie in 1..{self.r_cap}")
        return int(self.counts[r - 1])

    def conserved(self) -> bool:
        r = np.arange(1, self.r_cap + 1)
        return int((r * self.counts).sum()) + self.overflow_balls == self.total_balls

    def to_dict(self) -> dict:
        return {"scheme": self.scheme, "size": self.size, "counts": self.counts.tolist(),
                "overflow_boxes": self.overflow_boxes, "overflow_balls": self.overflow_balls,
                "total_balls": self.total_balls, "occupied": self.occupied,
                "prefix": self.prefix, "tail_balls": self.tail_balls}


class _Tally:
    def __init__(self, r_cap: int):
        self.r_cap = r_cap
        self.counts = np.zeros(r_cap + 2, dtype=np.int64)
        self.over_boxes = 0
        self.over_balls = 0
        self.balls = 0

    def boxes(self, occ: np.ndarray) -> None:
        """Add per-box ball counts (zeros allowed)."""
        occ = np.asarray(occ, dtype=np.int64)
        if occ.size == 0:
            return
        self.balls += int(occ.sum())
        big = occ > self.r_cap
        if big.any():
            self.over_boxes += int(big.sum())
            self.over_balls += int(occ[big].sum())
        self.counts += np.bincount(np.minimum(occ, self.r_cap + 1), minlength=self.r_cap + 2)

    def categories(self, cat: np.ndarray, over: np.ndarray) -> None:
        """Add box counts per category r = 0..r_cap plus explicit overflow loads."""
        self.counts[: self.r_cap + 1] += cat
        self.balls += int((np.arange(self.r_cap + 1) * cat).sum())
        if over.size:
            self.over_boxes += int(over.size)
            self.over_balls += int(over.sum())
            self.balls += int(over.sum())

    def vector(self, scheme: str, size: float, prefix: int, tail: int) -> CountVector:
        return CountVector(scheme, size, self.counts[1: self.r_cap + 1].copy(), self.over_boxes,
                           self.over_balls, self.balls, prefix, tail)


def _tally_ids(tally: _Tally, ids) -> None:
    if isinstance(ids, np.ndarray):
        if ids.size:
            tally.boxes(np.unique(ids, return_counts=True)[1])
    elif ids:
        tally.boxes(np.fromiter(Counter(ids).values(), dtype=np.int64))


def _uniform_ints(m: int, size: int, rng: np.random.Generator):
    """size uniform draws from range(m); Python ints once m passes int64."""
    if m <= INT64_SAFE:
        return rng.integers(0, m, size=size)
    bits = m.bit_length()
    limbs = -(-bits // 62)
    drop = limbs * 62 - bits
    out = []
    while len(out) < size:
        raw = rng.integers(0, 2**62, size=limbs)
        x = 0
        for v in raw:
            x = (x << 62) | int(v)
        x >>= drop
        if x < m:
            out.append(x)
    return out


def _poisson_over(lam: float, k: int, r_cap: int, rng: np.random.Generator) -> np.ndarray:
    """k draws of Poisson(lam) conditioned to exceed r_cap."""
    if k == 0:
        return np.zeros(0, dtype=np.int64)
    if k > MAX_DRAWS:
        raise SimulationError(f"{k} overflowing boxes exceed the simulation budget")
    if stats.poisson.sf(r_cap, lam) > 0.25:
        out = np.empty(0, dtype=np.int64)
        while out.size < k:
            x = rng.poisson(lam, size=2 * (k - out.size) + 8)
            out = np.concatenate([out, x[x > r_cap]])
        return out[:k]
    # inverse CDF on the conditional tail, walked in log space
    lsf = stats.poisson.logsf(r_cap, lam)
    u = rng.random(k)
    out = np.empty(k, dtype=np.int64)
    for i, ui in enumerate(u):
        j, acc = r_cap + 1, 0.0
        while True:
            acc += math.exp(stats.poisson.logpmf(j, lam) - lsf)
            if acc >= ui or acc >= 1.0 - 1e-15:
                break
            j += 1
        out[i] = j
    return out


def _category_probs(lam: float, r_cap: int) -> np.ndarray:
    return stats.poisson.pmf(np.arange(r_cap + 1), lam)


# ---------------------------------------------------------------------------
# Poissonized scheme

def _prefix(view: FrequencyView, scale: float) -> int:
    if view.support_size is not None:
        return view.support_size
    return view.count_above(HEAD_RATE / scale)


@lru_cache(maxsize=64)
def _sequence_plan(view: FrequencyView, scale: float) -> tuple[int, np.ndarray, float]:
    """(K, p_1..p_K, tail mass beyond K), shared by all replicates."""
    K = _prefix(view, scale)
    head = view.probs(1, K + 1) if K else np.zeros(0)
    full = view.support_size is not None and K >= view.support_size
    tail = 0.0 if full else view.power_tail(K, 1)
    return K, head, tail


@lru_cache(maxsize=64)
def _block_plan(view, t: float, r_cap: int) -> tuple:
    plan = []
    lt = math.log(t)
    for i in range(view.n_blocks):
        # per-box rate can underflow while the block's ball count does not
        llam = lt + view.level(i)
        if float(view.log_m[i]) + llam < -745.0:
            continue
        lam = math.exp(llam)
        # few balls: place them one by one (also dodges binomial draws with
        # p so small that 1 - p rounds to 1)
        few = float(view.log_m[i]) + llam < math.log(BALL_PATH)
        if view.mult[i] <= INT64_SAFE and not few:
            # occupied boxes first: 1 - P(empty) is the rounding-sensitive part
            occ = -math.expm1(-lam)
            p = _category_probs(lam, r_cap)[1:] / occ
            pv = np.append(p, max(0.0, 1.0 - p.sum()))
            plan.append((i, lam, (occ, pv / pv.sum())))
        else:
            plan.append((i, lam, None))
    ball_path = [float(view.log_m[i]) + lt + view.level(i) for i, _, pv in plan if pv is None]
    if ball_path and float(np.logaddexp.reduce(ball_path)) > math.log(MAX_DRAWS):
        raise SimulationError(f"t = {t:g} needs more than {MAX_DRAWS} individual ball placements")
    return tuple(plan)


def sample_poissonized(view: FrequencyView, t: float, rng: np.random.Generator,
                       r_cap: int = R_CAP) -> CountVector:
    """One draw of (Y_r(t)) with independent N_j(t) ~ Poisson(t p_j).

    Boxes with t p_j >= 1 are drawn individually; the remaining balls form
    a Poisson(t pi_K) batch placed box by box from the normalized tail.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    tally = _Tally(r_cap)
    if getattr(view, "is_blocks", False):
        tail = _poissonized_blocks(view, t, rng, tally)
        return tally.vector("poissonized", t, view.cum[-1], tail)
    K, head, tail = _sequence_plan(view, float(t))
    if K:
        tally.boxes(rng.poisson(t * head))
    if t * tail > MAX_DRAWS:
        raise SimulationError(f"t = {t:g} puts ~{t * tail:.3g} balls in the tail, over the budget")
    B = int(rng.poisson(t * tail)) if tail > 0 else 0
    if B:
        _tally_ids(tally, view.sample_beyond(K, B, rng))
    return tally.vector("poissonized", t, K, B)


def _poissonized_blocks(view, t: float, rng: np.random.Generator, tally: _Tally) -> int:
    r_cap = tally.r_cap
    for i, lam, pv in _block_plan(view, float(t), r_cap):
        m = view.mult[i]
        if pv is not None:
            occ, split = pv
            busy = int(rng.binomial(m, occ))
            cat = rng.multinomial(busy, split)
            cat = np.concatenate(([m - busy], cat))
            tally.categories(cat[:-1], _poisson_over(lam, int(cat[-1]), r_cap, rng))
        else:
            lmean = float(view.log_m[i]) + math.log(t) + view.level(i)
            if lmean > math.log(MAX_DRAWS):
                raise SimulationError(
                    f"block {i + view.index0} would need ~exp({lmean:.1f}) ball draws")
            mean = math.exp(lmean)
            _tally_ids(tally, _uniform_ints(m, int(rng.poisson(mean)), rng))
    tail = 0
    rem = view.remainder_mass()
    if rem > 0:
        tail = int(rng.poisson(t * rem))
        _place_factorial_remainder(view, tail, rng, tally)
    return tail


def _place_factorial_remainder(view, balls: int, rng: np.random.Generator, tally: _Tally) -> None:
    """Balls that fall past the last built Factorial block.

    Every such block i has (i-2)! >= 537! boxes, so two of at most MAX_DRAWS
    balls share a box with probability below 1e-1200.  Each ball is
    therefore its own singleton; no draws are needed.
    """
    if balls == 0:
        return
    if balls > MAX_DRAWS:
        raise SimulationError(f"{balls} remainder balls exceed the simulation budget")
    tally.categories(np.bincount([1], weights=[balls], minlength=tally.r_cap + 1).astype(np.int64),
                     np.zeros(0, dtype=np.int64))


# ---------------------------------------------------------------------------
# fixed-n scheme

def sample_fixed_n(view: FrequencyView, n: int, rng: np.random.Generator,
                   r_cap: int = R_CAP) -> CountVector:
    """One draw of (X_{n,r}): n balls thrown independently with probabilities p_j."""
    if n < 1 or int(n) != n:
        raise ValueError("n must be a positive integer")
    if view.spec.subprobability:
        raise ValueError("fixed-n sampling needs a true probability vector")
    n = int(n)
    tally = _Tally(r_cap)
    if getattr(view, "is_blocks", False):
        tail = _fixed_n_blocks(view, n, rng, tally)
        return tally.vector("fixed_n", n, view.cum[-1], tail)
    K, pv = _fixed_plan(view, n)
    draw = rng.multinomial(n, pv)
    tally.boxes(draw[:-1])
    B = int(draw[-1])
    if B:
        _tally_ids(tally, view.sample_beyond(K, B, rng))
    return tally.vector("fixed_n", n, K, B)


@lru_cache(maxsize=64)
def _fixed_plan(view: FrequencyView, n: int) -> tuple[int, np.ndarray]:
    K, head, tail = _sequence_plan(view, float(n))
    pv = np.append(head, tail)
    return K, pv / pv.sum()


def _fixed_n_blocks(view, n: int, rng: np.random.Generator, tally: _Tally) -> int:
    mass = np.exp(view.log_m + view.log_q)
    rem = view.remainder_mass()
    pv = np.append(mass, rem)
    per_block = rng.multinomial(n, pv / pv.sum())
    for i, b in enumerate(per_block[:-1]):
        if b:
            _tally_ids(tally, _uniform_ints(view.mult[i], int(b), rng))
    tail = int(per_block[-1])
    _place_factorial_remainder(view, tail, rng, tally)
    return tail


# ---------------------------------------------------------------------------
# replicate aggregation

@dataclass(frozen=True)
class SimConfig:
    scheme: str
    size: float
    reps: int = 1000
    r_cap: int = R_CAP
    seed: int = 0
    R: tuple[int, ...] = (1, 2, 3)
    retain: bool = True

    def __post_init__(self):
        if self.scheme not in ("fixed_n", "poissonized"):
            raise ValueError("scheme must be 'fixed_n' or 'poissonized'")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        R = tuple(int(r) for r in self.R)
        if not R or R[0] < 1 or any(b <= a for a, b in zip(R, R[1:])):
            raise ValueError("R must be a nonempty strictly increasing set of integers >= 1")
        object.__setattr__(self, "R", R)
        if self.r_cap < max(R):
            raise ValueError("r_cap must be >= max(R)")
        if self.scheme == "fixed_n" and (self.size < 1 or int(self.size) != self.size):
            raise ValueError("fixed-n size must be a positive integer")
        if not self.size > 0:
            raise ValueError("size must be positive")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")

    def to_dict(self) -> dict:
        size = int(self.size) if self.scheme == "fixed_n" else float(self.size)
        return {"scheme": self.scheme, "size": size, "reps": self.reps, "r_cap": self.r_cap,
                "seed": self.seed, "R": list(self.R)}


@dataclass(frozen=True)
class SimResult:
    config: SimConfig
    means: np.ndarray  # theoretical E counts[r], r in R
    variances: np.ndarray
    mean: np.ndarray  # empirical mean of standardized vectors
    cov: np.ndarray  # empirical covariance of standardized vectors
    raw_mean: np.ndarray  # empirical mean counts, r in R
    counts: np.ndarray = field(repr=False)  # reps x r_cap
    totals: np.ndarray = field(repr=False)  # total balls per replicate
    overflow: np.ndarray = field(repr=False)  # (boxes, balls) per replicate
    standardized: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def reps(self) -> int:
        return self.config.reps

    @property
    def seed(self) -> int:
        return self.config.seed

    def to_dict(self) -> dict:
        return {"config": self.config.to_dict(), "R": list(self.config.R),
                "theory_mean": self.means.tolist(), "theory_var": self.variances.tolist(),
                "mean": self.mean.tolist(), "cov": self.cov.tolist(),
                "raw_mean": self.raw_mean.tolist(), "reps": self.reps, "seed": self.seed,
                "mean_total_balls": float(self.totals.mean())}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def replicate_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["replicate", "r", "count"])
        for rep, row in enumerate(self.counts):
            for r, c in enumerate(row, start=1):
                w.writerow([rep, r, int(c)])
        return buf.getvalue()


def theory_moments(view: FrequencyView, config: SimConfig, tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Means and variances used for standardization.

    Poissonized runs use Phi_r(t), V_r(t). Fixed-n runs use the exact mean
    E X_{n,r} and the Poissonized variance V_r(n).
    """
    means, var = [], []
    for r in config.R:
        if config.scheme == "poissonized":
            means.append(phi(view, r, config.size, tol=tol).value)
        else:
            means.append(binomial_mean(view, int(config.size), r, tol=tol).value)
        v = variance(view, r, float(config.size), tol=tol).value
        if v < DEGENERATE_VAR:
            raise DegenerateVarianceError(r, v)
        var.append(v)
    return np.array(means), np.array(var)


def _run_block(view, config: SimConfig, reps: Sequence[int]) -> list[CountVector]:
    draw = sample_poissonized if config.scheme == "poissonized" else sample_fixed_n
    size = config.size if config.scheme == "poissonized" else int(config.size)
    return [draw(view, size, _stream(config.seed, rep), config.r_cap) for rep in reps]


def monte_carlo(view: FrequencyView, config: SimConfig, threads: Optional[int] = None,
                tol: float = 1e-9) -> SimResult:
    """Run config.reps replicates and summarize the standardized counts.

    Replicate k always uses stream (seed, k) and results are reduced in
    replicate order, so the output does not depend on the thread count.
    """
    means, var = theory_moments(view, config, tol)
    nthreads = thread_count(threads)
    idx = list(range(config.reps))
    if nthreads == 1:
        vecs = _run_block(view, config, idx)
    else:
        chunk = -(-config.reps // (4 * nthreads))
        parts = [idx[i:i + chunk] for i in range(0, config.reps, chunk)]
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            vecs = [v for part in pool.map(lambda p: _run_block(view, config, p), parts) for v in part]
    counts = np.array([v.counts for v in vecs], dtype=np.int64)
    totals = np.array([v.total_balls for v in vecs], dtype=np.int64)
    overflow = np.array([(v.overflow_boxes, v.overflow_balls) for v in vecs], dtype=np.int64)
    sel = counts[:, [r - 1 for r in config.R]].astype(np.float64)
    z = (sel - means) / np.sqrt(var)
    cov = np.atleast_2d(np.cov(z, rowvar=False)) if config.reps > 1 else np.zeros((len(config.R),) * 2)
    return SimResult(config, means, var, z.mean(axis=0), cov, sel.mean(axis=0), counts, totals,
                     overflow, z if config.retain else None)
