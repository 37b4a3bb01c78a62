"""Empirical joint cumulants, normality diagnostics and bootstrap errors.

Block integrals in the partition sums are replaced by empirical means of the
blockwise products (plug-in estimates).  All mixed moments ``E[prod_{i in S} psi_i]``
are computed once per subset mask ``S``, so the partition sum reduces to products
of table lookups.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special, stats

from .partitions import SetPartition, enumerate_partitions

__all__ = [
    "SampleSeries",
    "joint_cumulant",
    "conditional_cumulant",
    "cumulant_terms",
    "univariate_cumulants",
    "CumulantReport",
    "cumulant_report",
    "normal_cdf",
    "ks_distance",
    "ks_pvalue",
    "ecdf_distance",
    "MAX_CUMULANT_ORDER",
]

MAX_CUMULANT_ORDER = 8
BOOTSTRAP_RESAMPLES = 200


@dataclass(frozen=True)
class SampleSeries:
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size


def _as_array(s) -> np.ndarray:
    return s.values if isinstance(s, SampleSeries) else np.asarray(s, dtype=float).ravel()


def _stack(series_list) -> np.ndarray:
    arrs = [_as_array(s) for s in series_list]
    if not arrs:
        raise ValueError("need at least one series")
    n = arrs[0].size
    if any(a.size != n for a in arrs):
        raise ValueError("series lengths differ: " + ", ".join(str(a.size) for a in arrs))
    if n == 0:
        raise ValueError("series are empty")
    return np.vstack(arrs)


def _mask_moments(X: np.ndarray) -> np.ndarray:
    """``m[S] = mean(prod_{i in S} X[i])`` for every bitmask ``S``; ``m[0] = 1``."""
    r, n = X.shape
    prods = np.empty((1 << r, n))
    prods[0] = 1.0
    for S in range(1, 1 << r):
        low = (S & -S).bit_length() - 1
        prods[S] = prods[S & (S - 1)] * X[low]
    return prods.mean(axis=1)


def _masks(P: SetPartition) -> list[int]:
    return [sum(1 << (i - 1) for i in b) for b in P.blocks]


@lru_cache(maxsize=None)
def _partition_table(r: int) -> tuple[np.ndarray, np.ndarray]:
    """Block masks of every partition of ``1..r`` (zero-padded) and their coefficients."""
    parts = enumerate_partitions(r)
    table = np.zeros((len(parts), r), dtype=np.int64)
    coef = np.empty(len(parts))
    for row, P in enumerate(parts):
        ms = _masks(P)
        table[row, : len(ms)] = ms
        coef[row] = (-1) ** (len(ms) - 1) * math.factorial(len(ms) - 1)
    return table, coef


def cumulant_terms(series_list, Q: SetPartition | None = None) -> np.ndarray:
    """Individual partition-sum terms; their sum is the (conditional) cumulant."""
    X = _stack(series_list)
    r = X.shape[0]
    if not 1 <= r <= MAX_CUMULANT_ORDER:
        raise ValueError(f"need 1 <= r <= {MAX_CUMULANT_ORDER} series, got {r}")
    if Q is not None and Q.r != r:
        raise ValueError(f"Q partitions 1..{Q.r}, but {r} series were given")
    m = _mask_moments(X)
    q_masks = _masks(Q) if Q is not None else [(1 << r) - 1]
    # g[S] = prod_{J in Q} m[S & J]; padding mask 0 maps to g[0] = 1
    subsets = np.arange(1 << r)
    g = np.ones(1 << r)
    for J in q_masks:
        g *= m[subsets & J]
    table, coef = _partition_table(r)
    return coef * np.prod(g[table], axis=1)


def joint_cumulant(series_list) -> float:
    """Empirical joint cumulant of ``r`` series over common sample indices."""
    if len(series_list) < 2:
        raise ValueError("joint cumulants need at least two series")
    return math.fsum(cumulant_terms(series_list))


def conditional_cumulant(series_list, Q: SetPartition, *, return_scale: bool = False):
    """Partition sum with each block moment split further along ``Q``.

    For ``|Q| >= 2`` this vanishes identically; ``return_scale`` also returns
    ``sum |term|`` for judging the cancellation.
    """
    if not isinstance(Q, SetPartition):
        raise TypeError("Q must be a SetPartition")
    terms = cumulant_terms(series_list, Q)
    val = math.fsum(terms)
    if return_scale:
        return val, float(np.sum(np.abs(terms)))
    return val


def univariate_cumulants(x, r_max: int) -> np.ndarray:
    """Plug-in cumulants ``kappa_1..kappa_{r_max}`` from raw moments.

    Uses ``kappa_n = mu_n - sum_{k<n} C(n-1, k-1) kappa_k mu_{n-k}``, the
    partition sum for ``n`` copies of one series.  Data are centred first.
    """
    x = _as_array(x)
    mean = float(x.mean())
    y = x - mean
    mu = [1.0] + [float(np.mean(y**k)) for k in range(1, r_max + 1)]
    kappa = [0.0] * (r_max + 1)
    for n in range(1, r_max + 1):
        kappa[n] = mu[n] - sum(math.comb(n - 1, k - 1) * kappa[k] * mu[n - k] for k in range(1, n))
    kappa[1] = mean
    return np.array(kappa[1:])


@dataclass(frozen=True)
class CumulantReport:
    n: int
    mean: float
    variance: float
    cumulants: dict[int, tuple[float, float]] = field(default_factory=dict)

    def within(self, order: int, n_se: float = 4.0) -> bool:
        est, se = self.cumulants[order]
        return abs(est) <= n_se * se

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "mean": self.mean,
            "variance": self.variance,
            "cumulants": {str(k): {"estimate": v[0], "bootstrap_se": v[1]} for k, v in self.cumulants.items()},
        }


def cumulant_report(series, r_max: int = 4, *, n_boot: int = BOOTSTRAP_RESAMPLES, seed: int = 0) -> CumulantReport:
    """Mean, variance and cumulants of orders ``3..r_max`` with bootstrap SEs."""
    if not 3 <= r_max <= MAX_CUMULANT_ORDER:
        raise ValueError(f"r_max must lie in [3, {MAX_CUMULANT_ORDER}]")
    x = _as_array(series)
    if x.size < 2:
        raise ValueError("need at least two samples")
    k = univariate_cumulants(x, r_max)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    boot = np.array([univariate_cumulants(x[rng.integers(0, x.size, x.size)], r_max) for _ in range(n_boot)])
    se = boot.std(axis=0, ddof=1)
    cums = {order: (float(k[order - 1]), float(se[order - 1])) for order in range(3, r_max + 1)}
    return CumulantReport(int(x.size), float(k[0]), float(k[1]), cums)


def normal_cdf(xi, variance: float = 1.0):
    """CDF of the centred normal law with the given variance."""
    if not variance > 0:
        raise ValueError("variance must be positive")
    z = np.asarray(xi, dtype=float) / math.sqrt(2.0 * variance)
    out = 0.5 * special.erfc(-z)
    return float(out) if out.ndim == 0 else out


def ks_distance(series, variance: float = 1.0) -> float:
    """Sup distance between the empirical CDF and ``normal_cdf(., variance)``."""
    x = np.sort(_as_array(series))
    n = x.size
    if n == 0:
        raise ValueError("series is empty")
    F = normal_cdf(x, variance)
    F = np.atleast_1d(F)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def ks_pvalue(distance: float, n: int) -> float:
    """Exact one-sample Kolmogorov-Smirnov p-value."""
    return float(stats.kstwo.sf(distance, n))


def ecdf_distance(a, b) -> float:
    """Sup distance between the empirical CDFs of two samples."""
    a = np.sort(_as_array(a))
    b = np.sort(_as_array(b))
    grid = np.concatenate([a, b])
    Fa = np.searchsorted(a, grid, side="right") / a.size
    Fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(Fa - Fb)))
