"""Statistical machinery: portable RNG, normality test, and rank-based
pairwise comparisons.

Everything here is pure Python on purpose — reports must be byte-identical
across platforms, so we avoid linking numerical results to whatever BLAS or
libm build happens to be installed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Iterable, Sequence

from .errors import ErrorCode, EvalError

_STD_NORMAL = NormalDist()

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """Tiny deterministic 64-bit generator (splitmix64).

    State advances by the golden-ratio increment 0x9E3779B97F4A7C15; each
    output is the new state scrambled with the MurmurHash3-style finalizer
    z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27;
    z *= 0x94D049BB133111EB; z ^= z >> 31.
    The full sequence is a function of the seed alone, so any implementation
    of the same recurrence reproduces resampling decisions exactly.
    """

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, bound: int) -> int:
        """Next integer in [0, bound) by simple modulo reduction."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        return self.next_u64() % bound


def _poly(coeffs: Sequence[float], x: float) -> float:
    # Horner evaluation; coefficients ordered from constant term upward.
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


# Weight-correction and p-value polynomials from the AS R94 algorithm
# (Royston 1995), constant term first.
_C1 = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056]
_C2 = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633]
_C3 = [0.544, -0.39978, 0.025054, -6.714e-4]
_C4 = [1.3822, -0.77857, 0.062767, -0.0020322]
_C5 = [-1.5861, -0.31082, -0.083751, 0.0038915]
_C6 = [-0.4803, -0.082676, 0.0030302]


def shapiro_wilk(values: Iterable[float]) -> tuple[float, float]:
    """Shapiro–Wilk W statistic and p-value for a sample of n >= 3.

    Weights come from Blom plotting positions corrected by the Royston
    polynomials; the null distribution of log(1 - W) is approximated as
    normal with n-dependent location and scale (exact arcsine form at n=3).
    """
    xs = sorted(float(v) for v in values)
    n = len(xs)
    if n < 3:
        raise EvalError(ErrorCode.SAMPLE_SIZE, f"need at least 3 observations, got {n}")
    if xs[-1] - xs[0] <= 0.0:
        raise EvalError(ErrorCode.DEGENERATE_SAMPLE, "all observations are identical")

    half = n // 2
    a = [0.0] * half
    if n == 3:
        a[0] = math.sqrt(0.5)
    else:
        an25 = n + 0.25
        summ2 = 0.0
        for i in range(half):
            a[i] = _STD_NORMAL.inv_cdf((i + 1 - 0.375) / an25)
            summ2 += 2.0 * a[i] * a[i]
        ssumm2 = math.sqrt(summ2)
        rsn = 1.0 / math.sqrt(n)
        a1 = _poly(_C1, rsn) - a[0] / ssumm2
        if n > 5:
            start = 2
            a2 = -a[1] / ssumm2 + _poly(_C2, rsn)
            fac = math.sqrt(
                (summ2 - 2.0 * a[0] ** 2 - 2.0 * a[1] ** 2)
                / (1.0 - 2.0 * a1 ** 2 - 2.0 * a2 ** 2)
            )
            a[1] = a2
        else:
            start = 1
            fac = math.sqrt((summ2 - 2.0 * a[0] ** 2) / (1.0 - 2.0 * a1 ** 2))
        a[0] = a1
        for i in range(start, half):
            a[i] = -a[i] / fac

    mean = sum(xs) / n
    ssq = sum((v - mean) ** 2 for v in xs)
    sa = 0.0
    for i in range(half):
        sa += a[i] * (xs[n - 1 - i] - xs[i])
    w = sa * sa / ssq
    if w >= 1.0:
        w = 1.0

    if n == 3:
        # Exact: p = (6/pi) * (asin(sqrt(W)) - asin(sqrt(3/4)))
        p = (6.0 / math.pi) * (math.asin(math.sqrt(w)) - math.asin(math.sqrt(0.75)))
        return w, min(1.0, max(0.0, p))

    if w == 1.0:
        return w, 1.0
    y = math.log(1.0 - w)
    if n <= 11:
        gamma = _poly([-2.273, 0.459], float(n))
        if y >= gamma:
            return w, 1e-99
        y = -math.log(gamma - y)
        mu = _poly(_C3, float(n))
        sigma = math.exp(_poly(_C4, float(n)))
    else:
        ln_n = math.log(float(n))
        mu = _poly(_C5, ln_n)
        sigma = math.exp(_poly(_C6, ln_n))
    return w, 1.0 - _STD_NORMAL.cdf((y - mu) / sigma)


def midranks(pooled: Sequence[float]) -> list[float]:
    """Ranks 1..N with ties assigned the mean of the ranks they span."""
    order = sorted(range(len(pooled)), key=lambda i: pooled[i])
    ranks = [0.0] * len(pooled)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and pooled[order[j + 1]] == pooled[order[i]]:
            j += 1
        shared = (i + j) / 2.0 + 1.0  # mean of 1-based positions i..j
        for k in range(i, j + 1):
            ranks[order[k]] = shared
        i = j + 1
    return ranks


@dataclass(frozen=True)
class PairwiseComparison:
    """One group-vs-group row of a rank-based multiple-comparison test."""

    group_a: int
    group_b: int
    z: float
    p_raw: float
    p_adjusted: float
    significant: bool


def dunn_test(groups: Sequence[Sequence[float]], alpha: float = 0.05) -> list[PairwiseComparison]:
    """All-pairs z tests on pooled mid-ranks with a tie correction, adjusted
    by Bonferroni over the k*(k-1)/2 comparisons.

    z_ij = (Rbar_i - Rbar_j) / sqrt((N(N+1)/12 - T/(12(N-1))) * (1/n_i + 1/n_j))
    where T = sum over tie groups of (t^3 - t); p_adj = min(1, p_raw * k(k-1)/2).
    """
    k = len(groups)
    if k < 2:
        raise EvalError(ErrorCode.GROUP_TOO_SMALL, f"need at least 2 groups, got {k}")
    for gi, g in enumerate(groups):
        if len(g) < 1:
            raise EvalError(ErrorCode.GROUP_TOO_SMALL, f"group {gi} is empty")

    pooled: list[float] = []
    labels: list[int] = []
    for gi, g in enumerate(groups):
        for v in g:
            pooled.append(float(v))
            labels.append(gi)
    n_total = len(pooled)
    if n_total < 2:
        raise EvalError(ErrorCode.GROUP_TOO_SMALL, "fewer than 2 pooled observations")

    ranks = midranks(pooled)

    rank_sums = [0.0] * k
    sizes = [0] * k
    for lbl, r in zip(labels, ranks):
        rank_sums[lbl] += r
        sizes[lbl] += 1
    means = [rank_sums[i] / sizes[i] for i in range(k)]

    # Tie correction over the pooled sample.
    tie_sum = 0.0
    by_value: dict[float, int] = {}
    for v in pooled:
        by_value[v] = by_value.get(v, 0) + 1
    for count in by_value.values():
        if count > 1:
            tie_sum += count ** 3 - count

    variance_core = n_total * (n_total + 1) / 12.0 - tie_sum / (12.0 * (n_total - 1))
    n_pairs = k * (k - 1) // 2

    rows: list[PairwiseComparison] = []
    for i in range(k):
        for j in range(i + 1, k):
            se_sq = variance_core * (1.0 / sizes[i] + 1.0 / sizes[j])
            if se_sq <= 0.0:
                z = 0.0  # every pooled value tied; no evidence either way
            else:
                z = (means[i] - means[j]) / math.sqrt(se_sq)
            p_raw = 2.0 * (1.0 - _STD_NORMAL.cdf(abs(z)))
            p_adj = min(1.0, p_raw * n_pairs)
            rows.append(
                PairwiseComparison(
                    group_a=i,
                    group_b=j,
                    z=z,
                    p_raw=p_raw,
                    p_adjusted=p_adj,
                    significant=p_adj < alpha,
                )
            )
    return rows
