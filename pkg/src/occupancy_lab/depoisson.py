"""Total-variation bound between fixed-n and Poissonized count vectors."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .frequencies import NEG_INF, FrequencyView


@dataclass(frozen=True)
class DepoissonBound:
    n: int
    m: int
    k: int
    pi_k: float  # certified upper end of sum_{j>k} p_j
    bound: float
    applicable: bool  # m <= n p_k / 2
    k_capped: bool = False  # finite support reached before the rule stopped

    def to_dict(self) -> dict:
        return {"n": self.n, "m": self.m, "k": self.k, "pi_k": self.pi_k, "bound": self.bound,
                "applicable": self.applicable, "k_capped": self.k_capped}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _admissible(view: FrequencyView, k: int, log_n: float) -> bool:
    # 20 log k / p_k <= n, in logs; k = 1 always passes
    if k == 1:
        return True
    return math.log(20 * math.log(k)) - view.log_prob(k) <= log_n


def choose_k_capped(view: FrequencyView, n: int) -> tuple[int, bool]:
    """k(n) = max{k : 20 log k / p_k <= n} and whether the support capped it."""
    if n < 1:
        raise ValueError("n must be >= 1")
    ln = math.log(n)
    size = view.support_size
    lo, hi = 1, 2
    # the defining quantity is nondecreasing in k, so double then bisect
    while True:
        if size is not None and hi >= size:
            if _admissible(view, size, ln):
                return size, True
            hi = size
            break
        if not _admissible(view, hi, ln):
            break
        lo, hi = hi, hi * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _admissible(view, mid, ln):
            lo = mid
        else:
            hi = mid
    return lo, False


def choose_k(view: FrequencyView, n: int) -> int:
    return choose_k_capped(view, n)[0]


def tv_bound(view: FrequencyView, n: int, m: int) -> DepoissonBound:
    """pi_k + 2k exp(-n p_k / 10) at k = k(n), valid when m <= n p_k / 2."""
    if m < 1:
        raise ValueError("m must be >= 1")
    k, capped = choose_k_capped(view, n)
    _, hi = view.log_power_tail(k, 1)
    pi_k = 0.0 if hi == NEG_INF else math.exp(hi)
    npk = n * math.exp(view.log_prob(k))
    bound = pi_k + 2 * k * math.exp(-npk / 10)
    return DepoissonBound(int(n), int(m), int(k), pi_k, bound, m <= npk / 2, capped)
