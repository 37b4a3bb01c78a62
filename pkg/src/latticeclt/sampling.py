"""Random unimodular, affine and congruence lattices, with moment gates.

The base construction is the Hecke-point lattice ``H_a``: generators ``p e_1`` and
``e_j + a_j e_1`` (``j >= 2``), scaled by ``p^{-1/l}``.  Such a lattice is rational.
Any rational lattice has a full-rank sublattice inside the coordinate
hyperplane ``{x = 0}`` seen by the domain, so its point counts grow far faster
than the volume.  To avoid that, each sample is moved by a random
unipotent ``h = L U``, with ``L`` lower and ``U`` upper unitriangular and entries
``k / 2^P`` in ``[-1, 1]``.  Left multiplication preserves Haar measure, so
the twist never hurts equidistribution, and ``det h = 1`` holds exactly.  The
twisted generators are then LLL-reduced so the float basis is well conditioned.
For the pure Hecke construction, set ``twist_bits=0``.

Every draw comes from a Philox stream keyed by ``(master_seed, index, purpose)``.
The sample for an index therefore does not depend on which other indices
are drawn, or in what order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import flint
import numpy as np

from .constants import congruence_pair_sum, zeta, zeta_N
from .lattices import (
    BallIndicator,
    BoxIndicator,
    Lattice,
    LatticeKind,
    _transform_values,
    DEFAULT_CAP,
)

__all__ = [
    "SamplerConfig",
    "hecke_basis",
    "sample_unimodular",
    "sample_affine",
    "sample_congruence",
    "sample",
    "validate_sampler",
    "second_moment_prediction",
    "MomentGate",
    "SamplerReport",
    "DEFAULT_PRIME",
    "DEFAULT_TWIST_BITS",
]

DEFAULT_PRIME = 2**31 - 1
DEFAULT_TWIST_BITS = 400
SHIFT_BITS = 64
CONGRUENCE_MAX_DRAWS = 10_000

_G, _SHIFT = 0, 1  # stream purposes


@dataclass(frozen=True)
class SamplerConfig:
    l: int
    hecke_prime: int = DEFAULT_PRIME
    master_seed: int = 0
    kind: LatticeKind = LatticeKind.UNIMODULAR
    cong: tuple[tuple[int, ...], int] | None = None
    twist_bits: int = DEFAULT_TWIST_BITS

    def __post_init__(self):
        object.__setattr__(self, "kind", LatticeKind(self.kind))
        if int(self.l) != self.l or self.l < 2:
            raise ValueError("dimension must be an integer >= 2")
        p = int(self.hecke_prime)
        if p <= 1000 or not flint.fmpz(p).is_prime():
            raise ValueError(f"hecke_prime must be a prime above 1000, got {p}")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if self.twist_bits < 0:
            raise ValueError("twist_bits must be non-negative")
        if self.kind is LatticeKind.CONGRUENCE:
            if self.cong is None:
                raise ValueError("congruence sampling needs cong = (v, N)")
            v, N = self.cong
            v = tuple(int(x) for x in v)
            if len(v) != self.l or int(N) < 1 or math.gcd(*v, int(N)) != 1:
                raise ValueError("congruence data needs len(v) = l and gcd(v, N) = 1")
            object.__setattr__(self, "cong", (v, int(N)))

    @property
    def modulus(self) -> int:
        return self.cong[1] if self.cong else 1

    def to_dict(self) -> dict:
        return {
            "l": self.l,
            "hecke_prime": self.hecke_prime,
            "master_seed": self.master_seed,
            "kind": self.kind.value,
            "cong": [list(self.cong[0]), self.cong[1]] if self.cong else None,
            "twist_bits": self.twist_bits,
        }


def _stream(cfg: SamplerConfig, index: int, purpose: int) -> np.random.Generator:
    ss = np.random.SeedSequence(cfg.master_seed, spawn_key=(int(index), purpose))
    return np.random.Generator(np.random.Philox(ss))


def _uniform_int(rng: np.random.Generator, bits: int) -> int:
    """Uniform integer in ``[0, 2**bits)``."""
    nbytes = (bits + 7) // 8
    return int.from_bytes(rng.bytes(nbytes), "little") >> (8 * nbytes - bits)


def hecke_basis(p: int, a: list[int]) -> list[list[int]]:
    """Integer generator rows of the index-``p`` Hecke lattice."""
    l = len(a) + 1
    rows = [[p] + [0] * (l - 1)]
    for j, aj in enumerate(a, start=1):
        r = [0] * l
        r[0] = aj
        r[j] = 1
        rows.append(r)
    return rows


def _unipotent_rows(rng: np.random.Generator, l: int, bits: int) -> list[list[int]]:
    """``2^{2 bits} h^T`` for ``h = L U`` with dyadic entries in ``[-1, 1]``."""
    one = 1 << bits

    def draw():
        return _uniform_int(rng, bits + 1) - one

    low = [[one if i == j else (draw() if i > j else 0) for j in range(l)] for i in range(l)]
    up = [[one if i == j else (draw() if i < j else 0) for j in range(l)] for i in range(l)]
    h = flint.fmpz_mat(low) * flint.fmpz_mat(up)
    return [[int(x) for x in row] for row in h.transpose().tolist()]


def _draw_g(cfg: SamplerConfig, index: int) -> tuple[list[list[int]], int, float, list[int]]:
    rng = _stream(cfg, index, _G)
    p = int(cfg.hecke_prime)
    a = [int(x) for x in rng.integers(0, p, size=cfg.l - 1, dtype=np.int64)]
    rows = hecke_basis(p, a)
    exp2 = 0
    if cfg.twist_bits:
        ht = _unipotent_rows(rng, cfg.l, cfg.twist_bits)
        # points h g z  <->  rows (g z)^T h^T
        rows = (flint.fmpz_mat(rows) * flint.fmpz_mat(ht)).tolist()
        rows = [[int(x) for x in r] for r in rows]
        exp2 = 2 * cfg.twist_bits
    return rows, exp2, p ** (-1.0 / cfg.l), a


def _lll_rows(rows: list[list[int]], coset: list[Fraction]) -> tuple[list[list[int]], list[Fraction]]:
    """LLL-reduce the generator rows, carrying the coset along as ``w T^{-1} mod 1``."""
    reduced, T = flint.fmpz_mat(rows).lll(transform=True)
    Ti = T.inv()  # T is unimodular, so the inverse is integral
    l = len(rows)
    w = [sum((coset[i] * int(Ti[i, j]) for i in range(l)), Fraction(0)) % 1 for j in range(l)]
    out = [[int(x) for x in r] for r in reduced.tolist()]
    if T.det() < 0:
        # LLL may flip orientation; negating one generator restores det = +1
        out[0] = [-x for x in out[0]]
        w[0] = -w[0] % 1
    return out, w


def _build(cfg, index, kind, coset, cong=None) -> Lattice:
    rows, exp2, scale, _ = _draw_g(cfg, index)
    if cfg.twist_bits:
        # twisted generators are badly conditioned; a reduced basis keeps the float frame accurate
        rows, coset = _lll_rows(rows, list(coset))
        if cong is not None:
            N = cong[1]
            cong = (tuple(int(w * N) for w in coset), N)
    return Lattice(kind, tuple(map(tuple, rows)), exp2, scale, tuple(coset), cong)


def sample_unimodular(cfg: SamplerConfig, index: int) -> Lattice:
    return _build(cfg, index, LatticeKind.UNIMODULAR, [Fraction(0)] * cfg.l)


def sample_affine(cfg: SamplerConfig, index: int) -> Lattice:
    """``g Z^l + g w`` with ``g`` as for :func:`sample_unimodular` and ``w`` uniform in ``[0,1)^l``."""
    rng = _stream(cfg, index, _SHIFT)
    w = [Fraction(_uniform_int(rng, SHIFT_BITS), 1 << SHIFT_BITS) for _ in range(cfg.l)]
    return _build(cfg, index, LatticeKind.AFFINE, w)


def _primitive_residue(rng: np.random.Generator, l: int, N: int) -> tuple[int, ...]:
    if N == 1:
        return (0,) * l
    for _ in range(CONGRUENCE_MAX_DRAWS):
        w = tuple(int(x) for x in rng.integers(0, N, size=l, dtype=np.int64))
        if math.gcd(*w, N) == 1:
            return w
    raise RuntimeError(f"no vector primitive mod {N} in {CONGRUENCE_MAX_DRAWS} draws")


def sample_congruence(cfg: SamplerConfig, index: int) -> Lattice:
    """``g (Z^l + w/N)`` with ``w`` uniform over vectors primitive mod ``N``."""
    if cfg.cong is None:
        raise ValueError("congruence sampling needs cong = (v, N)")
    N = cfg.modulus
    w = _primitive_residue(_stream(cfg, index, _SHIFT), cfg.l, N)
    return _build(cfg, index, LatticeKind.CONGRUENCE, [Fraction(x, N) for x in w], (w, N))


def sample(cfg: SamplerConfig, index: int) -> Lattice:
    return {
        LatticeKind.UNIMODULAR: sample_unimodular,
        LatticeKind.AFFINE: sample_affine,
        LatticeKind.CONGRUENCE: sample_congruence,
    }[cfg.kind](cfg, index)


# --- moment gates ----------------------------------------------------------------

_PAIR_CUTOFF = 4000


def _pair_residue_sum(f, l: int, N: int) -> float:
    """``sum_{a>=1, gcd(a,N)=1} sum_{b != 0, b = a (N)} int f(a x) f(b x) dx`` for even ``f``.

    Functions declaring ``max_ratio`` have pair integrals vanishing unless
    ``b/a`` lies within that ratio, which bounds the inner range; otherwise
    both indices run to the cutoff.
    """
    if isinstance(f, (BallIndicator, BoxIndicator)):
        return f.integral(l) * congruence_pair_sum(l, N)
    ratio = getattr(f, "max_ratio", None)
    terms = []
    for a in range(1, _PAIR_CUTOFF):
        if math.gcd(a, N) != 1:
            continue
        if ratio is None:
            b = np.arange(1, _PAIR_CUTOFF)
        else:
            b = np.arange(int(a / ratio) + 1, int(math.ceil(a * ratio)))
        for signed in (b, -b):
            hit = b[(signed - a) % N == 0]
            if hit.size:
                terms.append(float(np.sum(f.pair_integral(a, hit, l))))
    return math.fsum(terms)


def second_moment_prediction(f, kind: LatticeKind, l: int, N: int = 1) -> float:
    """Mean of the squared Siegel transform under the invariant measure.

    ``(int f)^2 + int f^2`` for affine lattices; for unimodular (``N = 1``) and
    congruence lattices, ``(int f)^2`` plus the collinear-pair contribution
    ``zeta_N(l)^{-1} sum_{a, b} int f(a x) f(b x) dx`` over ``a >= 1`` coprime
    to ``N`` and ``b != 0`` with ``b = a (mod N)``.
    """
    kind = LatticeKind(kind)
    V = f.integral(l)
    if kind is LatticeKind.AFFINE:
        return V * V + f.square_integral(l)
    if kind is LatticeKind.UNIMODULAR:
        N = 1
    z = zeta(l) if N == 1 else zeta_N(l, N)
    return V * V + _pair_residue_sum(f, l, N) / z


@dataclass(frozen=True)
class MomentGate:
    name: str
    empirical: float
    predicted: float
    stderr: float
    n_se: float = 3.0

    @property
    def z_score(self) -> float:
        diff = self.empirical - self.predicted
        if self.stderr == 0.0:
            return 0.0 if diff == 0.0 else math.inf
        return diff / self.stderr

    @property
    def passed(self) -> bool:
        return abs(self.z_score) <= self.n_se

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "empirical": self.empirical,
            "predicted": self.predicted,
            "stderr": self.stderr,
            "z_score": self.z_score,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class SamplerReport:
    config: SamplerConfig
    n_samples: int
    first_moment: MomentGate
    second_moment: MomentGate
    values: np.ndarray = field(repr=False)

    @property
    def passed(self) -> bool:
        return self.first_moment.passed and self.second_moment.passed

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "n_samples": self.n_samples,
            "first_moment": self.first_moment.to_dict(),
            "second_moment": self.second_moment.to_dict(),
            "passed": self.passed,
        }


def validate_sampler(
    cfg: SamplerConfig, f, n_samples: int, *, n_se: float = 3.0, cap: int = DEFAULT_CAP
) -> SamplerReport:
    """Compare empirical moments of the Siegel transform of ``f`` with theory.

    Each statistic passes when within ``n_se`` standard errors of its
    prediction.
    """
    if n_samples < 1000:
        raise ValueError("validate_sampler needs at least 1000 samples")
    vals = np.array(
        [float(np.sum(_transform_values(f, sample(cfg, i), cap))) for i in range(n_samples)]
    )
    sq = vals * vals
    root_n = math.sqrt(n_samples)
    first = MomentGate(
        "first_moment", float(vals.mean()), f.integral(cfg.l), float(vals.std(ddof=1)) / root_n, n_se
    )
    second = MomentGate(
        "second_moment",
        float(sq.mean()),
        second_moment_prediction(f, cfg.kind, cfg.l, cfg.modulus),
        float(sq.std(ddof=1)) / root_n,
        n_se,
    )
    return SamplerReport(cfg, n_samples, first, second, vals)
