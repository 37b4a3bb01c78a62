"""Lattices, ball enumeration, Siegel transforms and tessellated counting.

A :class:`Lattice` keeps an *exact* description next to its float basis:
integer basis rows scaled by ``scale * 2**-exp2`` and a rational coefficient
shift.  Counting in deep tessellation shells needs this: the shell ``k``
lattice ``c0^k L`` has condition number of order ``2^{k(1 + max u)}``, far
beyond what any float basis of ``L`` can resolve.  Each shell basis is
therefore produced from the exact one by integer column scaling followed by
exact LLL reduction, and only the reduced basis is converted to floats for
enumeration.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

import flint
import numpy as np

from . import _kernels
from .geometry import DomainParams, ShellConvention, c0

__all__ = [
    "LatticeKind",
    "Lattice",
    "EnumerationCapError",
    "BallIndicator",
    "BoxIndicator",
    "BaseCellIndicator",
    "Pullback",
    "construct_lattice",
    "transform_diagonal",
    "tessellation_image",
    "enumerate_in_ball",
    "siegel_transform",
    "shell_counts",
    "count_tessellated",
    "count_direct",
    "discrepancy",
    "ShellCounts",
    "DEFAULT_CAP",
    "DET_TOL",
]

DEFAULT_CAP = 10**8
DET_TOL = 1e-8
JITTER_TOL = 1e-9


class LatticeKind(enum.Enum):
    UNIMODULAR = "unimodular"
    AFFINE = "affine"
    CONGRUENCE = "congruence"


class EnumerationCapError(RuntimeError):
    """The predicted number of enumerated points exceeds the configured cap."""


def _dyadic(x: float) -> tuple[int, int]:
    """``x = num * 2**-e`` exactly, with ``e >= 0``."""
    num, den = float(x).as_integer_ratio()
    e = den.bit_length() - 1
    return num, e


@dataclass(frozen=True, eq=False)
class Lattice:
    """``{basis @ (z + coset) : z in Z^l}`` with ``basis = scale * 2**-exp2 * rows.T``.

    ``rows[i]`` is the ``i``-th basis vector as exact integers.  ``cong``
    holds ``(v, N)`` for congruence lattices, whose coset is ``v / N``.
    """

    kind: LatticeKind
    rows: tuple[tuple[int, ...], ...]
    exp2: int
    scale: float
    coset: tuple[Fraction, ...]
    cong: tuple[tuple[int, ...], int] | None = None
    basis: np.ndarray = field(init=False, repr=False)
    shift: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        l = len(self.rows)
        if l < 2 or any(len(r) != l for r in self.rows):
            raise ValueError("basis must be square with l >= 2")
        if len(self.coset) != l:
            raise ValueError("coset length must equal dimension")
        coset = tuple(Fraction(w) - math.floor(Fraction(w)) for w in self.coset)
        if self.kind is LatticeKind.UNIMODULAR and any(coset):
            raise ValueError("unimodular lattices carry no shift")
        if self.kind is LatticeKind.CONGRUENCE:
            if self.cong is None:
                raise ValueError("congruence lattices need (v, N)")
            v, N = self.cong
            if N < 1 or math.gcd(*v, N) != 1:
                raise ValueError(f"congruence data needs gcd(v, N) = 1, got v={v}, N={N}")
            if tuple(Fraction(vi, N) % 1 for vi in v) != coset:
                raise ValueError("coset does not match v / N")
        object.__setattr__(self, "coset", coset)
        two = 1 << self.exp2
        B = np.array([[a / two for a in r] for r in self.rows], dtype=float).T * self.scale
        det = self.scale**l * (int(flint.fmpz_mat([list(r) for r in self.rows]).det()) / (1 << (l * self.exp2)))
        if not abs(det - 1.0) < DET_TOL:
            raise ValueError(f"basis determinant {det!r} is not 1 (tol {DET_TOL})")
        s = B @ np.array([float(w) for w in coset])
        B.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "basis", B)
        object.__setattr__(self, "shift", s)

    @property
    def l(self) -> int:
        return len(self.rows)

    @property
    def contains_origin(self) -> bool:
        return not any(self.coset)

    # --- JSON records -------------------------------------------------------

    def to_record(self) -> dict:
        rec = {
            "kind": self.kind.value,
            "basis": self.basis.tolist(),
            "shift": self.shift.tolist(),
            "v": list(self.cong[0]) if self.cong else None,
            "N": self.cong[1] if self.cong else None,
            "exact": {
                "rows": [[str(a) for a in r] for r in self.rows],
                "exp2": self.exp2,
                "scale": self.scale,
                "coset": [str(w) for w in self.coset],
            },
        }
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "Lattice":
        kind = LatticeKind(rec["kind"])
        cong = None
        if kind is LatticeKind.CONGRUENCE:
            cong = (tuple(int(v) for v in rec["v"]), int(rec["N"]))
        ex = rec.get("exact")
        if ex is not None:
            return cls(
                kind,
                tuple(tuple(int(a) for a in r) for r in ex["rows"]),
                int(ex["exp2"]),
                float(ex["scale"]),
                tuple(Fraction(w) for w in ex["coset"]),
                cong,
            )
        basis = np.asarray(rec["basis"], dtype=float)
        if kind is LatticeKind.AFFINE:
            return construct_lattice(kind, basis, translation=rec.get("shift"))
        if kind is LatticeKind.CONGRUENCE:
            return construct_lattice(kind, basis, cong)
        return construct_lattice(kind, basis)


def _solve_exact(basis: np.ndarray, rhs: Sequence[float]) -> tuple[Fraction, ...]:
    """Solve ``basis @ w = rhs`` in exact rational arithmetic."""
    l = basis.shape[0]
    a = [[Fraction(float(basis[i, j])) for j in range(l)] + [Fraction(float(rhs[i]))] for i in range(l)]
    for col in range(l):
        piv = next(r for r in range(col, l) if a[r][col] != 0)
        a[col], a[piv] = a[piv], a[col]
        for r in range(l):
            if r != col and a[r][col] != 0:
                f = a[r][col] / a[col][col]
                a[r] = [x - f * y for x, y in zip(a[r], a[col])]
    return tuple(a[i][l] / a[i][i] for i in range(l))


def construct_lattice(
    kind: LatticeKind | str,
    basis,
    aux=None,
    *,
    translation: Sequence[float] | None = None,
) -> Lattice:
    """Validated lattice from a float basis (columns are generators).

    ``aux`` is the coefficient shift ``w`` for affine lattices (points
    ``basis @ (z + w)``) and ``(v, N)`` for congruence lattices.  An affine
    lattice may instead be given by its ambient ``translation``.  Float
    entries are taken as exact dyadic rationals; the determinant is checked,
    never renormalised.
    """
    kind = LatticeKind(kind)
    B = np.asarray(basis, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1] or B.shape[0] < 2:
        raise ValueError("basis must be a square matrix with l >= 2")
    l = B.shape[0]
    parts = [[_dyadic(B[i, j]) for i in range(l)] for j in range(l)]  # rows = columns of B
    e = max(ex for r in parts for _, ex in r)
    rows = tuple(tuple(num << (e - ex) for num, ex in r) for r in parts)
    cong = None
    if kind is LatticeKind.UNIMODULAR:
        coset = (Fraction(0),) * l
    elif kind is LatticeKind.AFFINE:
        if translation is not None:
            coset = _solve_exact(B, translation)
        else:
            w = [0.0] * l if aux is None else aux
            coset = tuple(Fraction(x) for x in w)
    else:
        if aux is None:
            raise ValueError("congruence lattices need aux = (v, N)")
        v, N = aux
        v = tuple(int(x) for x in v)
        cong = (v, int(N))
        coset = tuple(Fraction(x, int(N)) for x in v)
    return Lattice(kind, rows, e, 1.0, coset, cong)


def transform_diagonal(lat: Lattice, diag: Sequence[float]) -> Lattice:
    """Image of ``lat`` under ``diag(d)``, exact for dyadic ``d``.

    The result keeps the kind of ``lat``; its determinant is ``prod(d)`` times
    the old one, so ``d`` must have unit product.
    """
    parts = [_dyadic(d) for d in diag]
    e = max(ex for _, ex in parts)
    mult = [num << (e - ex) for num, ex in parts]
    rows = tuple(tuple(a * m for a, m in zip(r, mult)) for r in lat.rows)
    return Lattice(lat.kind, rows, lat.exp2 + e, lat.scale, lat.coset, lat.cong)


def tessellation_image(lat: Lattice, params: DomainParams, k: int = 1) -> Lattice:
    """``c0^k`` applied to ``lat`` (``k >= 0``)."""
    d = np.diag(c0(params)) ** k
    return transform_diagonal(lat, d)


# --- exact reduction ---------------------------------------------------------


@dataclass
class _Frame:
    basis: np.ndarray  # float, columns
    t: np.ndarray  # float coefficient shift in [0, 1)


class _ExactState:
    """Integer row basis, scaling exponent and coset numerators."""

    def __init__(self, lat: Lattice):
        self.A = flint.fmpz_mat([list(r) for r in lat.rows])
        self.E = lat.exp2
        self.scale = lat.scale
        self.den = math.lcm(*(w.denominator for w in lat.coset))
        self.num = [int(w * self.den) for w in lat.coset]
        self.T: flint.fmpz_mat | None = None  # accumulated transform, when tracked
        self.n0: list[int] | None = None

    @property
    def shifted(self) -> bool:
        return any(self.num)

    def reduce(self, track: bool = False) -> None:
        if not self.shifted and not track:
            self.A = self.A.lll()
            return
        L, T = self.A.lll(transform=True)
        self.A = L
        Ti, d = T.inv().numer_denom()
        if track:
            self.T = T if self.T is None else T * self.T
        if self.shifted or track:
            raw = flint.fmpz_mat([self.num]) * Ti
            raw = [int(x) // int(d) for x in raw.entries()]
            if track:
                # w T^-1 = t + n0 with t in [0, 1)
                self.n0 = [x // self.den for x in raw]
            self.num = [x % self.den for x in raw]

    def scale_columns(self, mult: Sequence[int], e: int) -> None:
        self.A = self.A * flint.fmpz_mat([[mult[i] if i == j else 0 for j in range(len(mult))] for i in range(len(mult))])
        self.E += e

    def frame(self) -> _Frame:
        two = 1 << self.E
        ents = [int(x) / two for x in self.A.entries()]
        l = self.A.nrows()
        B = np.array(ents, dtype=float).reshape(l, l).T * self.scale
        t = np.array([x / self.den for x in self.num], dtype=float)
        return _Frame(B, t)


def _c0_scaling(params: DomainParams) -> tuple[list[int], int]:
    parts = [_dyadic(d) for d in np.diag(c0(params))]
    e = max(ex for _, ex in parts)
    return [num << (e - ex) for num, ex in parts], e


def _shell_frames(lat: Lattice, params: DomainParams, M: int) -> Iterator[_Frame]:
    if lat.l != params.l:
        raise ValueError(f"lattice dimension {lat.l} does not match l = {params.l}")
    st = _ExactState(lat)
    mult, e = _c0_scaling(params)
    for k in range(M):
        if k:
            st.scale_columns(mult, e)
        st.reduce()
        yield st.frame()


def _leaf_bound(B: np.ndarray, r2: float) -> float:
    R = np.linalg.qr(B, mode="r")
    r = math.sqrt(r2)
    return float(np.prod(2.0 * r / np.abs(np.diag(R)) + 1.0))


def _cell_args(params: DomainParams):
    u = params.u_array
    u_even = np.array([int(x) // 2 if float(x).is_integer() and int(x) % 2 == 0 else 0 for x in u], dtype=np.int64)
    return params.m, params.c_array, u, u_even


def _count_frame(
    fr: _Frame, params: DomainParams, y_hi2: float, closed: bool, cap: int, tol: float
) -> tuple[int, int]:
    m, c, u, u_even = _cell_args(params)
    r2 = float(np.sum(c * c)) + y_hi2
    if _leaf_bound(fr.basis, r2) > cap:
        raise EnumerationCapError(
            f"predicted enumeration size exceeds cap {cap} (radius^2 = {r2:.4g})"
        )
    cnt, sens, nodes = _kernels.count_cell(
        fr.basis, fr.t, m, c, u, u_even, 1.0, y_hi2, closed, tol, np.int64(cap) * 8
    )
    if nodes < 0:
        raise EnumerationCapError(f"enumeration exceeded {cap * 8} nodes")
    return int(cnt), int(sens)


# --- enumeration --------------------------------------------------------------


def _reduced_listing(lat: Lattice, radius: float, cap: int):
    st = _ExactState(lat)
    st.reduce(track=True)
    fr = st.frame()
    r2 = radius * radius
    if _leaf_bound(fr.basis, r2) > cap:
        raise EnumerationCapError(f"predicted enumeration size exceeds cap {cap}")
    size = 1024
    while True:
        out = np.zeros((size, lat.l))
        found = _kernels.list_ball(fr.basis, fr.t, r2, out)
        if found <= size:
            return st, fr, out[:found]
        size = found


def enumerate_in_ball(
    lat: Lattice,
    radius: float,
    *,
    cap: int = DEFAULT_CAP,
    return_coefficients: bool = False,
):
    """All lattice points with ``|v| <= radius``, lexicographic in ``z``.

    ``z`` are the integer coordinates with respect to ``lat.basis``
    (points ``basis @ (z + coset)``).
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    st, fr, zr = _reduced_listing(lat, radius, cap)
    T = [[int(x) for x in row] for row in st.T.tolist()]
    n0 = st.n0
    # z_orig = T^t (z' - n0)
    zs = []
    for zp in zr:
        d = [int(a) - b for a, b in zip(zp, n0)]
        zs.append(tuple(sum(d[i] * T[i][j] for i in range(lat.l)) for j in range(lat.l)))
    order = sorted(range(len(zs)), key=zs.__getitem__)
    pts = (fr.basis @ (zr + fr.t).T).T[order] if len(zs) else np.zeros((0, lat.l))
    if return_coefficients:
        return pts, [zs[i] for i in order]
    return pts


# --- test functions -------------------------------------------------------------


def _ball_volume(dim: int, radius: float) -> float:
    return math.pi ** (dim / 2) / math.gamma(dim / 2 + 1) * radius**dim


@dataclass(frozen=True)
class BallIndicator:
    radius: float

    def support_radius(self, l: int) -> float:
        return self.radius

    def evaluate(self, pts: np.ndarray) -> np.ndarray:
        return (np.einsum("ij,ij->i", pts, pts) <= self.radius**2).astype(float)

    def integral(self, l: int) -> float:
        return _ball_volume(l, self.radius)

    def square_integral(self, l: int) -> float:
        return self.integral(l)

    def pair_integral(self, a: int, b: int, l: int) -> float:
        """``int f(a z) f(b z) dz`` for positive integers ``a, b`` (``b`` may be an array)."""
        return self.integral(l) / np.maximum(a, b).astype(float) ** l


@dataclass(frozen=True)
class BoxIndicator:
    half_widths: tuple[float, ...]

    def support_radius(self, l: int) -> float:
        return math.sqrt(sum(h * h for h in self.half_widths))

    def evaluate(self, pts: np.ndarray) -> np.ndarray:
        return np.all(np.abs(pts) <= np.asarray(self.half_widths), axis=1).astype(float)

    def integral(self, l: int) -> float:
        return math.prod(2.0 * h for h in self.half_widths)

    def square_integral(self, l: int) -> float:
        return self.integral(l)

    def pair_integral(self, a: int, b: int, l: int) -> float:
        return self.integral(l) / np.maximum(a, b).astype(float) ** l


@dataclass(frozen=True)
class BaseCellIndicator:
    """Indicator of the base cell ``Omega_2`` under a boundary convention."""

    max_ratio = 2.0  # dilates by a and b overlap only when b/a lies in (1/2, 2)

    params: DomainParams
    convention: ShellConvention = ShellConvention.HALF_OPEN

    def support_radius(self, l: int) -> float:
        return self.params.cell_radius

    def evaluate(self, pts: np.ndarray) -> np.ndarray:
        from .geometry import contains_many

        return contains_many(self.params, pts, 2.0, self.convention).astype(float)

    def integral(self, l: int) -> float:
        from .geometry import volume_omega_T

        return volume_omega_T(self.params, 2.0)

    def square_integral(self, l: int) -> float:
        return self.integral(l)

    def pair_integral(self, a, b, l: int):
        """``int f(a x) f(b x) dx``; ``b`` may be an integer array."""
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        # the shells [1/a, 2/a) and [1/b, 2/b) overlap on a radial ratio 2 lo / hi
        ratio = np.maximum(2.0 * lo / hi, 1.0)
        out = self.integral(l) / math.log(2.0) * np.log(ratio) * np.asarray(hi, dtype=float) ** (-l)
        return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class Pullback:
    """``f o diag(d)`` for a base test function ``f``."""

    base: object
    diag: tuple[float, ...]

    def support_radius(self, l: int) -> float:
        return self.base.support_radius(l) / min(abs(d) for d in self.diag)

    def evaluate(self, pts: np.ndarray) -> np.ndarray:
        return self.base.evaluate(pts * np.asarray(self.diag))


def _transform_values(f, lat: Lattice, cap: int) -> np.ndarray:
    st, fr, zr = _reduced_listing(lat, f.support_radius(lat.l), cap)
    if not len(zr):
        return np.zeros(0)
    pts = (fr.basis @ (zr + fr.t).T).T
    vals = f.evaluate(pts)
    if lat.contains_origin:
        vals = vals[np.any(zr != 0, axis=1)]
    return vals


def siegel_transform(f, lat: Lattice, *, cap: int = DEFAULT_CAP) -> float:
    """Sum of ``f`` over the lattice points other than the origin."""
    return float(np.sum(_transform_values(f, lat, cap)))


# --- counting ---------------------------------------------------------------------


@dataclass(frozen=True)
class ShellCounts:
    counts: np.ndarray
    sensitive: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def shell_counts(
    lat: Lattice,
    params: DomainParams,
    M: int,
    *,
    cap: int = DEFAULT_CAP,
    audit: bool = False,
) -> ShellCounts:
    """Points of ``c0^k lat`` in the half-open base cell, for ``k < M``.

    With ``audit`` each shell also reports how many points lie within a
    relative ``1e-9`` of a boundary.
    """
    if M < 1:
        raise ValueError("M must be a positive integer")
    tol = JITTER_TOL if audit else 0.0
    counts = np.zeros(M, dtype=np.int64)
    sens = np.zeros(M, dtype=np.int64)
    for k, fr in enumerate(_shell_frames(lat, params, M)):
        counts[k], sens[k] = _count_frame(fr, params, 4.0, False, cap, tol)
    return ShellCounts(counts, sens)


def count_tessellated(lat: Lattice, params: DomainParams, M: int, *, cap: int = DEFAULT_CAP) -> int:
    """``|lat ∩ Omega_{2^M}|`` as a sum over tessellation shells."""
    return shell_counts(lat, params, M, cap=cap).total


def count_direct(
    lat: Lattice,
    params: DomainParams,
    T: float,
    conv: ShellConvention = ShellConvention.HALF_OPEN,
    *,
    cap: int = DEFAULT_CAP,
) -> int:
    """``|lat ∩ Omega_T|`` from a single enumeration of the enclosing ball."""
    if not T > 1:
        raise ValueError("T must exceed 1")
    if lat.l != params.l:
        raise ValueError(f"lattice dimension {lat.l} does not match l = {params.l}")
    st = _ExactState(lat)
    st.reduce()
    cnt, _ = _count_frame(st.frame(), params, T * T, conv is ShellConvention.PAPER_CLOSED, cap, 0.0)
    return cnt


def discrepancy(lat: Lattice, params: DomainParams, M: int, *, cap: int = DEFAULT_CAP) -> float:
    """Normalised discrepancy ``(count - M vol_2) / (M vol_2)^{1/2}``."""
    from .geometry import volume_omega_T

    vol = M * volume_omega_T(params, 2.0)
    return (count_tessellated(lat, params, M, cap=cap) - vol) / math.sqrt(vol)
