"""Geometry of the counting domains.

The domain with parameters ``(m, n, c, u)`` and height ``T`` is

    { (x, y) in R^m x R^n : 1 <= |y| <= T,  |x_i| |y|^{u_i} < c_i }.

For ``T = 2^M`` it is tessellated by the diagonal map
``c0 = diag(2^{u_1}, ..., 2^{u_m}, 1/2, ..., 1/2)``: the shell
``2^k <= |y| < 2^{k+1}`` is mapped onto the base cell ``1 <= |y| < 2`` by
``c0^k``.  All tessellation logic uses half-open shells; the closed form of
the domain is available through :attr:`ShellConvention.PAPER_CLOSED`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence, Union

import numpy as np

__all__ = [
    "DomainParams",
    "Point",
    "ShellConvention",
    "OmegaT",
    "PairIntersection",
    "ShellOverlap",
    "DyadicReduction",
    "omega_n",
    "volume_omega_T",
    "contains",
    "contains_many",
    "c0",
    "shell_index",
    "shell_index_many",
    "pair_intersection_volume",
    "mc_volume",
    "dyadic_reduction",
]

SUM_U_TOL = 1e-12


class ShellConvention(enum.Enum):
    """Boundary convention on the spheres ``|y| = 2^k``."""

    PAPER_CLOSED = "paper_closed"  # 1 <= |y| <= T
    HALF_OPEN = "half_open"  # 1 <= |y| < T


@dataclass(frozen=True)
class DomainParams:
    m: int
    n: int
    c: tuple[float, ...]
    u: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "c", tuple(float(v) for v in self.c))
        object.__setattr__(self, "u", tuple(float(v) for v in self.u))
        if self.m < 1 or self.n < 1:
            raise ValueError(f"need m >= 1 and n >= 1, got m={self.m}, n={self.n}")
        if len(self.c) != self.m or len(self.u) != self.m:
            raise ValueError("c and u must both have length m")
        if any(not v > 0 for v in self.c) or any(not v > 0 for v in self.u):
            raise ValueError("all c_i and u_i must be positive")
        if abs(math.fsum(self.u) - self.n) > SUM_U_TOL:
            raise ValueError(f"sum(u) = {math.fsum(self.u)!r} must equal n = {self.n}")

    @property
    def l(self) -> int:
        return self.m + self.n

    @property
    def c_array(self) -> np.ndarray:
        return np.asarray(self.c, dtype=float)

    @property
    def u_array(self) -> np.ndarray:
        return np.asarray(self.u, dtype=float)

    @property
    def cell_radius(self) -> float:
        """Radius of a ball centred at 0 containing the base cell."""
        return math.sqrt(math.fsum(v * v for v in self.c) + 4.0)

    def to_dict(self) -> dict:
        return {"m": self.m, "n": self.n, "c": list(self.c), "u": list(self.u)}

    @classmethod
    def from_dict(cls, d: dict) -> "DomainParams":
        return cls(int(d["m"]), int(d["n"]), tuple(d["c"]), tuple(d["u"]))


@dataclass(frozen=True)
class Point:
    x: tuple[float, ...]
    y: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        object.__setattr__(self, "y", tuple(float(v) for v in self.y))

    def as_array(self) -> np.ndarray:
        return np.array(self.x + self.y)


def _check_dims(params: DomainParams, p: Point) -> None:
    if len(p.x) != params.m or len(p.y) != params.n:
        raise ValueError(
            f"point dimensions ({len(p.x)}, {len(p.y)}) do not match (m, n) = "
            f"({params.m}, {params.n})"
        )


def omega_n(n: int) -> float:
    """Surface area of the unit sphere in R^n."""
    if n < 1:
        raise ValueError("omega_n requires n >= 1")
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def _cell_constant(params: DomainParams) -> float:
    # 2^m c_1 ... c_m omega_n
    return 2.0**params.m * math.prod(params.c) * omega_n(params.n)


def volume_omega_T(params: DomainParams, T: float) -> float:
    if not T > 1:
        raise ValueError(f"T must exceed 1, got {T}")
    return _cell_constant(params) * math.log(T)


def _x_weights(ny2: float, u: Sequence[float]) -> list[float]:
    return [ny2 ** (ui / 2.0) for ui in u]


def contains(
    params: DomainParams,
    p: Point,
    T: float,
    conv: ShellConvention = ShellConvention.HALF_OPEN,
) -> bool:
    _check_dims(params, p)
    ny2 = math.fsum(v * v for v in p.y)
    if ny2 < 1.0:
        return False
    T2 = T * T
    if conv is ShellConvention.HALF_OPEN:
        if not ny2 < T2:
            return False
    elif ny2 > T2:
        return False
    w = _x_weights(ny2, params.u)
    return all(abs(xi) * wi < ci for xi, wi, ci in zip(p.x, w, params.c))


def _split(params: DomainParams, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pts = np.asarray(pts, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != params.l:
        raise ValueError(f"expected an array of shape (k, {params.l})")
    return pts[:, : params.m], pts[:, params.m :]


def _x_ok(params: DomainParams, x: np.ndarray, ny2: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        w = ny2[:, None] ** (params.u_array / 2.0)
        return np.all(np.abs(x) * w < params.c_array, axis=1)


def contains_many(
    params: DomainParams,
    pts: np.ndarray,
    T: float,
    conv: ShellConvention = ShellConvention.HALF_OPEN,
) -> np.ndarray:
    """Vectorised :func:`contains` over the rows of ``pts`` (``x`` then ``y``)."""
    x, y = _split(params, pts)
    ny2 = np.einsum("ij,ij->i", y, y)
    T2 = T * T
    upper = ny2 < T2 if conv is ShellConvention.HALF_OPEN else ny2 <= T2
    return (ny2 >= 1.0) & upper & _x_ok(params, x, ny2)


def c0(params: DomainParams) -> np.ndarray:
    """The diagonal tessellation element."""
    return np.diag(np.concatenate([2.0 ** params.u_array, np.full(params.n, 0.5)]))


def _shell_of_norm2(ny2: float) -> int:
    # floor(log2 |y|) computed exactly: ny2 = f * 2^e with f in [0.5, 1)
    _, e = math.frexp(ny2)
    return (e - 1) // 2


def shell_index(params: DomainParams, p: Point, M: int) -> int | None:
    """Index ``k`` of the half-open shell of ``Omega_{2^M}`` holding ``p``."""
    _check_dims(params, p)
    ny2 = math.fsum(v * v for v in p.y)
    if ny2 < 1.0:
        return None
    k = _shell_of_norm2(ny2)
    if k >= M:
        return None
    w = _x_weights(ny2, params.u)
    if all(abs(xi) * wi < ci for xi, wi, ci in zip(p.x, w, params.c)):
        return k
    return None


def shell_index_many(params: DomainParams, pts: np.ndarray, M: int) -> np.ndarray:
    """Vectorised :func:`shell_index`; ``-1`` marks points outside ``Omega_{2^M}``."""
    x, y = _split(params, pts)
    ny2 = np.einsum("ij,ij->i", y, y)
    _, e = np.frexp(ny2)
    k = (e.astype(np.int64) - 1) // 2
    ok = (ny2 >= 1.0) & (k < M) & _x_ok(params, x, ny2)
    return np.where(ok, k, -1)


def pair_intersection_volume(params: DomainParams, s1: int, s2: int) -> float:
    """Integral of ``chi_Omega(s1 z) chi_{Omega_2}(s2 z)`` over R^l.

    ``Omega`` is the domain without the constraint on ``|y|`` (the union of all
    tessellation translates of the base cell).
    """
    if s1 < 1 or s2 < 1:
        raise ValueError("s1 and s2 must be positive integers")
    return _cell_constant(params) * math.log(2.0) * float(max(s1, s2)) ** (-params.l)


# --- Monte Carlo oracle -----------------------------------------------------


@dataclass(frozen=True)
class OmegaT:
    T: float


@dataclass(frozen=True)
class PairIntersection:
    s1: int
    s2: int


@dataclass(frozen=True)
class ShellOverlap:
    """Base cell intersected with its ``k``-th tessellation translate."""

    k: int


Region = Union[OmegaT, PairIntersection, ShellOverlap]

_MC_BLOCK = 1 << 16


def _uniform_ball(rng: np.random.Generator, size: int, dim: int, radius: float) -> np.ndarray:
    g = rng.standard_normal((size, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * rng.random(size) ** (1.0 / dim)
    return g * r[:, None]


def _region_box(params: DomainParams, region: Region) -> float:
    if isinstance(region, OmegaT):
        if not region.T > 1:
            raise ValueError("OmegaT region needs T > 1")
        return float(region.T)
    if isinstance(region, PairIntersection):
        if region.s1 < 1 or region.s2 < 1:
            raise ValueError("PairIntersection needs positive dilations")
        return 2.0 / min(region.s1, region.s2)
    if isinstance(region, ShellOverlap):
        return 2.0
    raise TypeError(f"unknown region {region!r}")


def _region_hits(params: DomainParams, region: Region, pts: np.ndarray) -> np.ndarray:
    hs = ShellConvention.HALF_OPEN
    if isinstance(region, OmegaT):
        return contains_many(params, pts, region.T, ShellConvention.PAPER_CLOSED)
    if isinstance(region, PairIntersection):
        a = pts * region.s1
        x, y = _split(params, a)
        in_cone = _x_ok(params, x, np.einsum("ij,ij->i", y, y))
        return in_cone & contains_many(params, pts * region.s2, 2.0, hs)
    d = np.diag(c0(params)) ** region.k
    return contains_many(params, pts, 2.0, hs) & contains_many(params, pts * d, 2.0, hs)


def mc_volume(
    params: DomainParams, region: Region, n_samples: int, seed: int
) -> tuple[float, float]:
    """Hit-or-miss Monte Carlo volume with its standard error.

    Samples are drawn in fixed-size blocks, block ``b`` from its own
    counter-based stream keyed by ``(seed, b)``; a shorter run is therefore a
    prefix of a longer one.
    """
    if n_samples < 1000:
        raise ValueError("mc_volume needs at least 1000 samples")
    R = _region_box(params, region)
    box_x = params.c_array
    if R <= 0 or np.any(box_x <= 0):
        raise ValueError("degenerate enclosing box")
    box_vol = float(np.prod(2 * box_x)) * math.pi ** (params.n / 2) / math.gamma(params.n / 2 + 1) * R**params.n
    hits = 0
    done = 0
    block = 0
    while done < n_samples:
        size = min(_MC_BLOCK, n_samples - done)
        ss = np.random.SeedSequence(seed, spawn_key=(block,))
        rng = np.random.Generator(np.random.Philox(ss))
        x = (2.0 * rng.random((_MC_BLOCK, params.m)) - 1.0) * box_x
        y = _uniform_ball(rng, _MC_BLOCK, params.n, R)
        pts = np.hstack([x, y])[:size]
        hits += int(np.count_nonzero(_region_hits(params, region, pts)))
        done += size
        block += 1
    p = hits / n_samples
    return box_vol * p, box_vol * math.sqrt(p * (1.0 - p) / n_samples)


# --- reduction to dyadic heights --------------------------------------------


class DyadicReduction(NamedTuple):
    M: int
    a_T: float
    z_bound: float


def dyadic_reduction(T: float, params: DomainParams | None = None) -> DyadicReduction:
    """Largest ``M`` with ``T/2 < 2^M <= T`` and the correction terms.

    ``a_T = (vol(Omega_{2^M}) / vol(Omega_T))^{1/2}`` and ``z_bound`` is
    ``vol(Omega_T minus Omega_{2^M}) / vol(Omega_T)^{1/2}``.  Without
    ``params`` the domain constant ``2^m prod(c) omega_n`` is taken as 1.
    """
    if not T > 2:
        raise ValueError(f"T must exceed 2, got {T}")
    _, e = math.frexp(T)
    M = e - 1
    logT = math.log(T)
    a_T = math.sqrt(M * math.log(2.0) / logT)
    gamma = 1.0 if params is None else _cell_constant(params)
    z = gamma * (logT - M * math.log(2.0)) / math.sqrt(gamma * logT)
    return DyadicReduction(M, a_T, z)
