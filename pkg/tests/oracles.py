"""Brute-force reference distributions used by several test files."""

import itertools
import math
from collections import Counter


def outcome(assignment, n_boxes, n):
    loads = Counter(assignment)
    return tuple(sum(1 for b in range(n_boxes) if loads[b] == r) for r in range(1, n + 1))


def fixed_n_law(p, n):
    """Exact law of (X_{n,1}, ..., X_{n,n}) by enumerating all k**n placements."""
    law = Counter()
    for a in itertools.product(range(len(p)), repeat=n):
        law[outcome(a, len(p), n)] += math.prod(p[b] for b in a)
    return dict(law)


def poissonized_law(p, t, max_load):
    """Law of (Y_1, ..., Y_max_load) with independent Poisson loads, truncated."""
    law = Counter()
    pmfs = [[math.exp(-t * q) * (t * q) ** k / math.factorial(k) for k in range(max_load + 1)] for q in p]
    for loads in itertools.product(range(max_load + 1), repeat=len(p)):
        pr = math.prod(pmfs[i][k] for i, k in enumerate(loads))
        law[tuple(sum(1 for k in loads if k == r) for r in range(1, max_load + 1))] += pr
    return dict(law)


def within_se(law, observed, reps, k=4.0):
    """Worst |freq - prob| / se over all outcomes; unobserved mass is also checked."""
    worst = 0.0
    for key in set(law) | set(observed):
        prob = law.get(key, 0.0)
        freq = observed.get(key, 0) / reps
        se = math.sqrt(max(prob * (1 - prob), 1.0 / reps) / reps)
        worst = max(worst, abs(freq - prob) / se)
    return worst <= k, worst
