"""Zeta values and the limiting variance constants.

Series are evaluated as a direct partial sum followed by an Euler-Maclaurin
tail.  For ``t -> (t + a)^{-x}`` every derivative has constant sign, so the
Euler-Maclaurin remainder is bounded by the first omitted correction term;
that term is returned as a rigorous error bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

__all__ = [
    "zeta",
    "hurwitz_zeta",
    "zeta_with_bound",
    "hurwitz_zeta_with_bound",
    "zeta_N",
    "zeta_N_euler",
    "sigma_u_sq",
    "sigma_c_sq",
    "sigma_c_sq_rogers",
    "congruence_pair_sum",
    "VarianceConstants",
    "variance_constants",
]

_HEAD = 32
_EM_TERMS = 10
# B_{2k} / (2k)!
_BERN = [
    Fraction(1, 6), Fraction(-1, 30), Fraction(1, 42), Fraction(-1, 30), Fraction(5, 66),
    Fraction(-691, 2730), Fraction(7, 6), Fraction(-3617, 510), Fraction(43867, 798),
    Fraction(-174611, 330), Fraction(854513, 138),
]
_BERN_COEF = [float(b / math.factorial(2 * (k + 1))) for k, b in enumerate(_BERN)]


def _check_x(x: float) -> None:
    if not x > 1.0001:
        raise ValueError(f"series diverges or converges too slowly: need x > 1.0001, got {x}")


def hurwitz_zeta_with_bound(x: float, a: float) -> tuple[float, float]:
    """``sum_{j>=0} (j + a)^{-x}`` and an absolute error bound."""
    _check_x(x)
    if not a > 0:
        raise ValueError("Hurwitz parameter must be positive")
    head = math.fsum((j + a) ** -x for j in range(_HEAD))
    t = _HEAD + a
    tail = [t ** (1 - x) / (x - 1), 0.5 * t**-x]
    rising = x  # (x)_{2k-1}
    for k in range(_EM_TERMS):
        tail.append(_BERN_COEF[k] * rising * t ** (-x - 2 * k - 1))
        rising *= (x + 2 * k + 1) * (x + 2 * k + 2)
    bound = abs(_BERN_COEF[_EM_TERMS] * rising * t ** (-x - 2 * _EM_TERMS - 1))
    value = head + math.fsum(tail)
    return value, bound + 4 * math.ulp(value)


def zeta_with_bound(x: float) -> tuple[float, float]:
    return hurwitz_zeta_with_bound(x, 1.0)


def hurwitz_zeta(x: float, a: float) -> float:
    return hurwitz_zeta_with_bound(x, a)[0]


def zeta(x: float) -> float:
    """Riemann zeta for real ``x > 1``, absolute error below 1e-12."""
    return zeta_with_bound(x)[0]


def _coprime_residues(N: int) -> list[int]:
    return [s for s in range(1, N + 1) if math.gcd(s, N) == 1]


def zeta_N(x: float, N: int) -> float:
    """``sum over s >= 1 coprime to N of s^{-x}``, summed class by class."""
    if N < 1:
        raise ValueError("N must be a positive integer")
    _check_x(x)
    return math.fsum(N**-x * hurwitz_zeta(x, s / N) for s in _coprime_residues(N))


def _prime_factors(N: int) -> list[int]:
    out, p = [], 2
    while p * p <= N:
        if N % p == 0:
            out.append(p)
            while N % p == 0:
                N //= p
        p += 1
    if N > 1:
        out.append(N)
    return out


def zeta_N_euler(x: float, N: int) -> float:
    """``zeta(x) * prod_{p | N} (1 - p^{-x})``."""
    if N < 1:
        raise ValueError("N must be a positive integer")
    return zeta(x) * math.prod(1.0 - p**-x for p in _prime_factors(N))


def _check_l(l: int) -> None:
    if int(l) != l or l < 3:
        raise ValueError(f"dimension must be an integer >= 3 (zeta(l-1) diverges at l = 2), got {l}")


def sigma_u_sq(l: int) -> float:
    """Limiting variance for unimodular lattices: ``2 (2 zeta(l-1)/zeta(l) - 1)``."""
    _check_l(l)
    return 2.0 * (2.0 * zeta(l - 1) / zeta(l) - 1.0)


def sigma_c_sq(l: int, N: int) -> float:
    """The closed-form congruence variance constant.

    ``(2/z)(1 + (2/z) sum_{s in C_N} sum_{t >= 1} (t - 1)/(N t + s)^l)`` with
    ``z = zeta_N(l)`` and ``C_N = {0 <= s < N : gcd(s, N) = 1}``.  The inner
    sum is ``N^{-l} (h(l-1, 1+a) - (1+a) h(l, 1+a))`` in Hurwitz zeta ``h``
    with ``a = s/N``.
    """
    _check_l(l)
    if N < 1:
        raise ValueError("N must be a positive integer")
    z = zeta_N(l, N)
    inner = []
    for s in range(N):
        if math.gcd(s, N) != 1:
            continue
        a = 1.0 + s / N
        inner.append(N**-l * (hurwitz_zeta(l - 1, a) - a * hurwitz_zeta(l, a)))
    return 2.0 / z * (1.0 + 2.0 / z * math.fsum(inner))


def _max_sum(l: int, r1: int, r2: int, N: int) -> float:
    """``sum_{a = r1, b = r2 (mod N); a, b >= 1} max(a, b)^{-l}``.

    Residues are taken in ``[1, N]``.
    """
    a1, a2 = r1 / N, r2 / N
    ind1 = 1.0 if r1 >= r2 else 0.0  # b <= a with a the larger
    ind2 = 1.0 if r1 < r2 else 0.0  # a < b with b the larger
    first = hurwitz_zeta(l - 1, a1) + (ind1 - a1) * hurwitz_zeta(l, a1)
    second = hurwitz_zeta(l - 1, a2) + (ind2 - a2) * hurwitz_zeta(l, a2)
    return N**-l * (first + second)


def congruence_pair_sum(l: int, N: int) -> float:
    """``sum_{s1 >= 1, gcd(s1, N) = 1} sum_{s2 != 0, s2 = s1 (N)} max(s1, |s2|)^{-l}``."""
    _check_l(l)
    if N < 1:
        raise ValueError("N must be a positive integer")
    terms = []
    for r in _coprime_residues(N):
        neg = (-r) % N or N
        terms.append(_max_sum(l, r, r, N))
        terms.append(_max_sum(l, r, neg, N))
    return math.fsum(terms)


def sigma_c_sq_rogers(l: int, N: int) -> float:
    """Congruence variance implied by the second-moment formula.

    This is ``congruence_pair_sum(l, N) / zeta_N(l)``; it equals
    :func:`sigma_u_sq` at ``N = 1``.
    """
    return congruence_pair_sum(l, N) / zeta_N(l, N)


@dataclass(frozen=True)
class VarianceConstants:
    l: int
    N: int | None
    sigma_u_sq: float
    sigma_c_sq: float | None
    sigma_c_sq_rogers: float | None
    zeta_values: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "l": self.l,
            "N": self.N,
            "sigma_u_sq": self.sigma_u_sq,
            "sigma_c_sq": self.sigma_c_sq,
            "sigma_c_sq_rogers": self.sigma_c_sq_rogers,
            "zeta_values": dict(self.zeta_values),
        }


def variance_constants(l: int, N: int | None = None) -> VarianceConstants:
    _check_l(l)
    zv = {f"zeta({l - 1})": zeta(l - 1), f"zeta({l})": zeta(l)}
    sc = scr = None
    if N is not None:
        zv[f"zeta_{N}({l})"] = zeta_N(l, N)
        sc = sigma_c_sq(l, N)
        scr = sigma_c_sq_rogers(l, N)
    return VarianceConstants(l, N, sigma_u_sq(l), sc, scr, zv)
