"""Standardization, the Bentkus rate object and empirical normality checks."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np
from scipy import stats

from .frequencies import FrequencyView
from .moments import DEGENERATE_VAR, CovMatrix, DegenerateVarianceError, MomentTable, c_floor, variance
from .sampling import CountVector, SimResult

KS_THRESHOLD = 0.02
COV_THRESHOLD = 0.03

Moments = Union[MomentTable, Mapping[int, tuple[float, float]]]


def _moments_for(moments: Moments, size: float, R: Sequence[int]) -> dict[int, tuple[float, float]]:
    if isinstance(moments, MomentTable):
        found = {e.r: (e.phi, e.var) for e in moments.entries if e.t == size}
    else:
        found = dict(moments)
    missing = [r for r in R if r not in found]
    if missing:
        raise KeyError(f"no moments for r = {missing} at size {size}")
    return {r: found[r] for r in R}


def standardize(counts: CountVector, R: Sequence[int], moments: Moments) -> np.ndarray:
    """((counts[r] - mean_r) / sqrt(var_r)) for r in R.

    ``moments`` is a MomentTable evaluated at the vector's own n or t, or a
    mapping r -> (mean, variance).
    """
    mv = _moments_for(moments, counts.size, R)
    out = []
    for r in R:
        mean, var = mv[r]
        if var < DEGENERATE_VAR:
            raise DegenerateVarianceError(r, var)
        out.append((counts.count(r) - mean) / math.sqrt(var))
    return np.array(out)


@dataclass(frozen=True)
class BentkusBound:
    R: tuple[int, ...]
    t: float
    c_R: float
    min_var: float
    beta: float  # rate only: the absolute constant is unknown

    def to_dict(self) -> dict:
        return {"R": list(self.R), "t": self.t, "c_R": self.c_R, "min_var": self.min_var,
                "beta_bound": self.beta, "absolute_constant": "unknown; not applied"}


def beta_bound(m: int, c_R: float, min_var: float) -> float:
    return (m / c_R) ** 1.5 / math.sqrt(min_var)


def bentkus_bound(view: FrequencyView, R: Sequence[int], t: float, tol: float = 1e-9) -> BentkusBound:
    """(m / c_R)^{3/2} / min_r sqrt(V_r(t)), with c_R from the largest index."""
    R = tuple(int(r) for r in R)
    if not R or R[0] < 1 or any(b <= a for a, b in zip(R, R[1:])):
        raise ValueError("R must be a nonempty strictly increasing set of integers >= 1")
    vs = [variance(view, r, t, tol=tol).value for r in R]
    for r, v in zip(R, vs):
        if v < DEGENERATE_VAR:
            raise DegenerateVarianceError(r, v)
    cr = c_floor(R)
    mv = min(vs)
    return BentkusBound(R, float(t), cr, mv, beta_bound(len(R), cr, mv))


@dataclass(frozen=True)
class NormalityReport:
    R: tuple[int, ...]
    ks: tuple[float, ...]
    cov_deviation: float
    reps: int
    ks_threshold: float
    cov_threshold: float
    ks_raw: tuple[float, ...] = ()

    @property
    def passed(self) -> bool:
        return max(self.ks) < self.ks_threshold and self.cov_deviation < self.cov_threshold

    def to_dict(self) -> dict:
        return {"R": list(self.R), "ks": list(self.ks), "ks_raw": list(self.ks_raw),
                "cov_deviation": self.cov_deviation,
                "reps": self.reps, "ks_threshold": self.ks_threshold,
                "cov_threshold": self.cov_threshold, "passed": self.passed}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def ks_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "ks"])
        for r, k in zip(self.R, self.ks):
            w.writerow([r, repr(k)])
        return buf.getvalue()


def lattice_ks(z: np.ndarray, step: float) -> float:
    """KS distance between standardized integer counts and N(0, 1).

    The counts live on a lattice with spacing ``step`` after standardizing, so
    the empirical CDF at a lattice point is compared with the normal CDF half
    a step to the right (continuity correction).  Without it a step ECDF can
    never get closer to Phi than about half its largest atom.
    """
    z = np.sort(np.asarray(z, dtype=np.float64))
    n = z.size
    vals, first = np.unique(z, return_index=True)
    after = np.append(first[1:], n) / n  # F at each distinct value
    before = first / n  # F just below it
    h = 0.5 * step
    upper = np.abs(after - stats.norm.cdf(vals + h))
    lower = np.abs(before - stats.norm.cdf(vals - h))
    return float(max(upper.max(), lower.max()))


def normality_diagnostics(sim: Union[SimResult, np.ndarray], target: Union[CovMatrix, np.ndarray],
                          ks_threshold: float = KS_THRESHOLD,
                          cov_threshold: float = COV_THRESHOLD,
                          R: Sequence[int] = (),
                          lattice_steps: Sequence[float] = ()) -> NormalityReport:
    """Per-marginal KS against N(0,1) and the largest covariance deviation.

    ``sim`` may be a SimResult with retained standardized vectors or a raw
    (reps x m) array of standardized draws.  For a SimResult the KS gate uses
    the continuity-corrected lattice statistic with step 1/sd; for raw arrays
    it is the plain statistic unless ``lattice_steps`` is given.
    """
    if isinstance(sim, SimResult):
        z = sim.standardized
        if z is None:
            raise ValueError("simulation did not retain standardized vectors")
        R = sim.config.R
        lattice_steps = tuple(1.0 / np.sqrt(sim.variances))
    else:
        z = np.atleast_2d(np.asarray(sim, dtype=np.float64))
        R = tuple(R) or tuple(range(1, z.shape[1] + 1))
    tgt = target.matrix if isinstance(target, CovMatrix) else np.atleast_2d(np.asarray(target))
    m = z.shape[1]
    if tgt.shape != (m, m):
        raise ValueError(f"target is {tgt.shape}, simulation has dimension {m}")
    raw = tuple(float(stats.kstest(np.sort(z[:, i]), "norm").statistic) for i in range(m))
    if lattice_steps:
        if len(lattice_steps) != m:
            raise ValueError("need one lattice step per marginal")
        ks = tuple(lattice_ks(z[:, i], float(lattice_steps[i])) for i in range(m))
    else:
        ks = raw
    cov = np.atleast_2d(np.cov(z, rowvar=False))
    dev = float(np.abs(cov - tgt).max())
    return NormalityReport(tuple(R), ks, dev, z.shape[0], ks_threshold, cov_threshold, raw)
