"""Set partitions, the separation schedule and the index-space cover.

Index tuples ``k in {0..M-1}^r`` are split into a near-diagonal region, where
all pairwise gaps are at most ``beta_r``, and clustered regions
``Omega_Q(alpha, beta)``.  A clustered region collects the tuples whose blocks
of ``Q`` each have diameter ``<= alpha`` while distinct blocks sit more than
``beta`` apart.  :func:`verify_cover` checks exhaustively that these regions
cover the whole index cube.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "SetPartition",
    "enumerate_partitions",
    "bell_number",
    "Schedule",
    "beta_schedule",
    "Region",
    "classify_tuple",
    "CoverReport",
    "verify_cover",
    "diagonal_region_size",
    "MAX_ORDER",
    "COVER_CAP",
]

MAX_ORDER = 10
COVER_CAP = 10**7


@dataclass(frozen=True)
class SetPartition:
    """A partition of ``{1, ..., r}``; blocks sorted, and ordered by least element."""

    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        blocks = tuple(sorted((tuple(sorted(b)) for b in self.blocks), key=lambda b: b[0] if b else 0))
        if any(not b for b in blocks):
            raise ValueError("blocks must be nonempty")
        flat = [i for b in blocks for i in b]
        r = len(flat)
        if sorted(flat) != list(range(1, r + 1)):
            raise ValueError(f"blocks must be disjoint and cover 1..{r}: {self.blocks}")
        object.__setattr__(self, "blocks", blocks)

    @property
    def r(self) -> int:
        return sum(len(b) for b in self.blocks)

    def __len__(self) -> int:
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    def labels(self) -> tuple[int, ...]:
        """Block index of each element ``1..r`` (restricted growth string)."""
        out = [0] * self.r
        for bi, b in enumerate(self.blocks):
            for i in b:
                out[i - 1] = bi
        return tuple(out)

    @classmethod
    def from_labels(cls, labels: Sequence[int]) -> "SetPartition":
        groups: dict[int, list[int]] = {}
        for i, g in enumerate(labels, start=1):
            groups.setdefault(g, []).append(i)
        return cls(tuple(tuple(v) for v in groups.values()))

    def __str__(self) -> str:
        return "{" + ",".join("{" + ",".join(map(str, b)) + "}" for b in self.blocks) + "}"


def _growth_strings(r: int) -> Iterator[tuple[int, ...]]:
    s = [0] * r

    def rec(i: int, top: int):
        if i == r:
            yield tuple(s)
            return
        for g in range(top + 2):
            s[i] = g
            yield from rec(i + 1, max(top, g))

    if r:
        yield from rec(1, 0)


def enumerate_partitions(r: int) -> list[SetPartition]:
    """All partitions of ``{1..r}``, in lexicographic restricted-growth order."""
    if int(r) != r or not 1 <= r <= MAX_ORDER:
        raise ValueError(f"r must be an integer in [1, {MAX_ORDER}], got {r}")
    return list(_partitions_cached(int(r)))


@lru_cache(maxsize=None)
def _partitions_cached(r: int) -> tuple[SetPartition, ...]:
    return tuple(SetPartition.from_labels(s) for s in _growth_strings(r))


def bell_number(r: int) -> int:
    """Bell numbers via the Bell triangle."""
    if r < 0:
        raise ValueError("r must be non-negative")
    row = [1]
    for _ in range(r):
        nxt = [row[-1]]
        for x in row:
            nxt.append(nxt[-1] + x)
        row = nxt
    return row[0]


# --- schedule ------------------------------------------------------------------


@dataclass(frozen=True)
class Schedule:
    """Thresholds ``alpha_0..alpha_{r-1}`` and ``beta_1..beta_r``.

    ``margin`` is ``min_j (delta' beta_{j+1} - q r tau alpha_j - delta' eta)``;
    it is negative when the separation inequality fails for some ``j``.  The
    scaled variant attains equality, so the sign test allows rounding noise.
    """

    r: int
    eta: float
    delta_prime: float
    q: float
    tau: float
    alpha: tuple[float, ...]
    beta: tuple[float, ...]
    variant: str = "verbatim"
    margin: float = 0.0

    @property
    def separation_holds(self) -> bool:
        return self.margin >= -1e-12 * self.delta_prime * self.beta[-1]

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "eta": self.eta,
            "delta_prime": self.delta_prime,
            "q": self.q,
            "tau": self.tau,
            "alpha": list(self.alpha),
            "beta": list(self.beta),
            "variant": self.variant,
            "margin": self.margin,
            "separation_holds": self.separation_holds,
        }


def beta_schedule(
    r: int,
    eta: float,
    delta_prime: float = 1.0,
    q: float = 1.0,
    tau: float = 1.0,
    *,
    variant: str = "verbatim",
) -> Schedule:
    """Evaluate the threshold recursion.

    ``beta_1 = eta`` and ``beta_{j+1} = max(eta + (3+r) beta_j, eta + r (3+r) q tau / delta')``
    with ``alpha_j = (3+r) beta_j``.  The ``"scaled"`` variant multiplies the
    second branch by ``beta_j``, which makes the separation margin
    non-negative by construction.
    """
    if int(r) != r or r < 3:
        raise ValueError("r must be an integer >= 3")
    for name, val in (("eta", eta), ("delta_prime", delta_prime), ("q", q), ("tau", tau)):
        if not val > 0:
            raise ValueError(f"{name} must be positive, got {val}")
    if variant not in ("verbatim", "scaled"):
        raise ValueError("variant must be 'verbatim' or 'scaled'")
    growth = 3 + r
    floor_term = r * growth * q * tau / delta_prime
    beta = [float(eta)]
    for _ in range(r - 1):
        b = beta[-1]
        second = floor_term * (b if variant == "scaled" else 1.0)
        beta.append(max(eta + growth * b, eta + second))
    alpha = [0.0] + [growth * b for b in beta[:-1]]
    margin = min(
        delta_prime * beta[j] - q * r * tau * alpha[j] - delta_prime * eta for j in range(r)
    )
    return Schedule(r, float(eta), float(delta_prime), float(q), float(tau), tuple(alpha), tuple(beta), variant, margin)


# --- regions -------------------------------------------------------------------------


@dataclass(frozen=True)
class Region:
    """``Delta(beta)`` when ``partition`` is None, else ``Omega_Q(alpha_j, beta_{j+1})``."""

    partition: SetPartition | None
    alpha: float | None
    beta: float
    j: int | None = None

    @property
    def is_diagonal(self) -> bool:
        return self.partition is None

    def __str__(self) -> str:
        if self.partition is None:
            return f"Delta(beta={self.beta:g})"
        return f"Omega_{self.partition}(alpha_{self.j}={self.alpha:g}, beta_{self.j + 1}={self.beta:g})"


def _pair_lists(Q: SetPartition):
    lab = Q.labels()
    r = len(lab)
    intra, inter = [], []
    for i, j in itertools.combinations(range(r), 2):
        (intra if lab[i] == lab[j] else inter).append((i, j))
    return intra, inter


def classify_tuple(k: Sequence[int], sched: Schedule, M: int) -> list[Region]:
    """Every region containing the index tuple ``k``."""
    r = sched.r
    if len(k) != r:
        raise ValueError(f"tuple length {len(k)} does not match r = {r}")
    if any(not 0 <= int(x) < M for x in k):
        raise ValueError(f"tuple entries must lie in [0, {M})")
    gap = lambda i, j: abs(int(k[i]) - int(k[j]))  # noqa: E731
    out = []
    if all(gap(i, j) <= sched.beta[-1] for i, j in itertools.combinations(range(r), 2)):
        out.append(Region(None, None, sched.beta[-1]))
    for j in range(r):
        a, b = sched.alpha[j], sched.beta[j]
        for Q in enumerate_partitions(r):
            if len(Q) < 2:
                continue
            intra, inter = _pair_lists(Q)
            if all(gap(*p) <= a for p in intra) and all(gap(*p) > b for p in inter):
                out.append(Region(Q, a, b, j))
    return out


@dataclass(frozen=True)
class CoverReport:
    r: int
    M: int
    schedule: Schedule
    n_tuples: int
    n_diagonal: int
    uncovered: tuple[tuple[int, ...], ...]

    @property
    def covered(self) -> bool:
        return not self.uncovered

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "M": self.M,
            "schedule": self.schedule.to_dict(),
            "n_tuples": self.n_tuples,
            "n_diagonal": self.n_diagonal,
            "uncovered": [list(t) for t in self.uncovered],
            "covered": self.covered,
        }


def _all_tuples(r: int, M: int) -> np.ndarray:
    grids = np.indices((M,) * r, dtype=np.int64).reshape(r, -1)
    return grids.T


def _gaps(tuples: np.ndarray) -> np.ndarray:
    r = tuples.shape[1]
    idx = list(itertools.combinations(range(r), 2))
    if not idx:
        return np.zeros((tuples.shape[0], 0), dtype=np.int64)
    a = np.array([i for i, _ in idx])
    b = np.array([j for _, j in idx])
    return np.abs(tuples[:, a] - tuples[:, b])


def verify_cover(r: int, M: int, sched: Schedule, *, cap: int = COVER_CAP) -> CoverReport:
    """Exhaustively check that the near-diagonal and clustered regions cover ``{0..M-1}^r``."""
    if sched.r != r:
        raise ValueError("schedule order does not match r")
    if M < 1:
        raise ValueError("M must be positive")
    if M**r > cap:
        raise ValueError(f"M^r = {M**r} exceeds the exhaustive cap {cap}")
    tuples = _all_tuples(r, M)
    gaps = _gaps(tuples)
    pair_pos = {p: n for n, p in enumerate(itertools.combinations(range(r), 2))}
    diag = np.all(gaps <= sched.beta[-1], axis=1) if gaps.shape[1] else np.ones(len(tuples), bool)
    open_idx = np.flatnonzero(~diag)
    for j in range(r):
        a, b = sched.alpha[j], sched.beta[j]
        for Q in enumerate_partitions(r):
            if len(Q) < 2 or not open_idx.size:
                continue
            intra, inter = _pair_lists(Q)
            g = gaps[open_idx]
            ok = np.ones(open_idx.size, dtype=bool)
            if intra:
                ok &= g[:, [pair_pos[p] for p in intra]].max(axis=1) <= a
            ok &= g[:, [pair_pos[p] for p in inter]].min(axis=1) > b
            open_idx = open_idx[~ok]
    uncovered = tuple(tuple(int(x) for x in tuples[i]) for i in open_idx)
    return CoverReport(r, M, sched, len(tuples), int(diag.sum()), uncovered)


def diagonal_region_size(r: int, M: int, beta: float) -> int:
    """``|{k in {0..M-1}^r : all pairwise gaps <= beta}|`` by exhaustive count."""
    if M**r > COVER_CAP:
        raise ValueError("exhaustive count too large")
    gaps = _gaps(_all_tuples(r, M))
    return int(np.all(gaps <= beta, axis=1).sum()) if gaps.shape[1] else M
