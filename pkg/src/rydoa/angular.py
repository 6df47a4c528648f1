"""Angular-momentum algebra.

Quantum numbers are stored doubled so that half-integers stay exact.
3-j symbols use the Racah single-sum formula evaluated in exact rational
arithmetic; only the final square root is taken in floating point.
Phases follow the Condon-Shortley convention.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import InvalidInput


@dataclass(frozen=True, order=True)
class HalfInt:
    twice: int

    @classmethod
    def of(cls, value) -> "HalfInt":
        if isinstance(value, HalfInt):
            return value
        if isinstance(value, str):
            value = Fraction(value)
        t = 2 * Fraction(value)
        if t.denominator != 1:
            raise InvalidInput(f"{value!r} is not a multiple of 1/2")
        return cls(int(t))

    @property
    def value(self) -> float:
        return self.twice / 2

    def __neg__(self):
        return HalfInt(-self.twice)

    def __add__(self, other):
        return HalfInt(self.twice + HalfInt.of(other).twice)

    def __sub__(self, other):
        return HalfInt(self.twice - HalfInt.of(other).twice)

    def __float__(self):
        return self.twice / 2

    def __repr__(self):
        if self.twice % 2:
            return f"{self.twice}/2"
        return str(self.twice // 2)


def _twice(x) -> int:
    return HalfInt.of(x).twice


def _valid_pair(tj: int, tm: int) -> bool:
    return tj >= 0 and abs(tm) <= tj and (tj - tm) % 2 == 0


def projections(j) -> list[HalfInt]:
    """All m = -j, ..., j."""
    tj = _twice(j)
    return [HalfInt(tm) for tm in range(-tj, tj + 1, 2)]


@lru_cache(maxsize=None)
def _three_j_sq_signed(t1, t2, t3, u1, u2, u3):
    """(sign, exact square) of the 3-j symbol from doubled arguments."""
    if u1 + u2 + u3 != 0:
        return 0, Fraction(0)
    if not (abs(t1 - t2) <= t3 <= t1 + t2) or (t1 + t2 + t3) % 2:
        return 0, Fraction(0)
    f = math.factorial
    a = (t1 + t2 - t3) // 2
    b = (t1 - t2 + t3) // 2
    c = (-t1 + t2 + t3) // 2
    tri = Fraction(f(a) * f(b) * f(c), f((t1 + t2 + t3) // 2 + 1))
    pre = (f((t1 + u1) // 2) * f((t1 - u1) // 2) * f((t2 + u2) // 2)
           * f((t2 - u2) // 2) * f((t3 + u3) // 2) * f((t3 - u3) // 2))
    # k runs over all values keeping every factorial argument nonnegative
    x1 = (t3 - t2 + u1) // 2
    x2 = (t3 - t1 - u2) // 2
    y1 = a
    y2 = (t1 - u1) // 2
    y3 = (t2 + u2) // 2
    s = Fraction(0)
    for k in range(max(0, -x1, -x2), min(y1, y2, y3) + 1):
        den = f(k) * f(x1 + k) * f(x2 + k) * f(y1 - k) * f(y2 - k) * f(y3 - k)
        s += Fraction((-1) ** k, den)
    if s == 0:
        return 0, Fraction(0)
    phase = (t1 - t2 - u3) // 2
    sign = (-1) ** phase * (1 if s > 0 else -1)
    return sign, tri * pre * s * s


def wigner_3j(j1, j2, j3, m1, m2, m3, strict: bool = False) -> float:
    """Wigner 3-j symbol (j1 j2 j3; m1 m2 m3).

    Out-of-range projections give 0, or raise InvalidInput when strict.
    A parity mismatch between j and m always raises.
    """
    t = [_twice(v) for v in (j1, j2, j3)]
    u = [_twice(v) for v in (m1, m2, m3)]
    for tj, tm in zip(t, u):
        if tj < 0:
            raise InvalidInput("angular momentum must be nonnegative")
        if (tj - tm) % 2:
            raise InvalidInput("j and m must differ by an integer")
        if abs(tm) > tj:
            if strict:
                raise InvalidInput(f"|m|={abs(tm)}/2 exceeds j={tj}/2")
            return 0.0
    sign, sq = _three_j_sq_signed(*t, *u)
    if sign == 0:
        return 0.0
    return sign * math.sqrt(sq)


def clebsch_gordan(j1, m1, j2, m2, J, M, strict: bool = False) -> float:
    """<j1 m1; j2 m2 | J M> via the 3-j conversion."""
    tj1, tj2, tJ, tM = _twice(j1), _twice(j2), _twice(J), _twice(M)
    if abs(tM) > tJ and not strict:
        return 0.0
    w = wigner_3j(j1, j2, J, m1, m2, -HalfInt(tM), strict=strict)
    phase = (tj1 - tj2 + tM) // 2
    return math.sqrt(tJ + 1) * (-1) ** phase * w


@dataclass(frozen=True)
class SphericalBasis:
    e_minus: np.ndarray
    e_zero: np.ndarray
    e_plus: np.ndarray
    quantization_axis: np.ndarray

    def vector(self, q: int) -> np.ndarray:
        return {-1: self.e_minus, 0: self.e_zero, 1: self.e_plus}[q]

    def components(self, v) -> dict[int, complex]:
        """Contravariant components a_q with v = sum_q a_q e_q."""
        v = np.asarray(v, dtype=complex)
        return {q: complex(np.vdot(self.vector(q), v)) for q in (-1, 0, 1)}

    def matrix(self) -> np.ndarray:
        """Rows e_{-1}, e_0, e_{+1}."""
        return np.array([self.e_minus, self.e_zero, self.e_plus])


_X = np.array([1.0, 0.0, 0.0])
_Y = np.array([0.0, 1.0, 0.0])
_Z = np.array([0.0, 0.0, 1.0])
_SQ2 = math.sqrt(2.0)

# beams propagate along +x, so x is the default quantization axis
_REF_MINUS = (_Y - 1j * _Z) / _SQ2
_REF_ZERO = _X.astype(complex)
_REF_PLUS = -(_Y + 1j * _Z) / _SQ2


def rotation_taking(a, b) -> np.ndarray:
    """Minimal rotation matrix R with R a = b for unit vectors a, b.

    Antiparallel inputs use a 180 degree turn about z (or about y when
    a is along z).
    """
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    v = np.cross(a, b)
    c = float(a @ b)
    s = float(np.linalg.norm(v))
    if s < 1e-12:
        if c > 0:
            return np.eye(3)
        n = _Z if abs(a @ _Z) < 0.9 else _Y
        return 2.0 * np.outer(n, n) - np.eye(3)
    k = v / s
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + s * K + (1.0 - c) * (K @ K)


def basis_for_axis(axis) -> SphericalBasis:
    """Spherical basis whose e_0 points along ``axis``."""
    axis = np.asarray(axis, float)
    n = float(np.linalg.norm(axis))
    if n == 0.0 or not np.isfinite(n):
        raise InvalidInput("quantization axis must have nonzero finite norm")
    if abs(n - 1.0) > 1e-12:
        raise InvalidInput("quantization axis must be a unit vector")
    R = rotation_taking(_X, axis / n)
    return SphericalBasis(
        e_minus=R @ _REF_MINUS,
        e_zero=R @ _REF_ZERO,
        e_plus=R @ _REF_PLUS,
        quantization_axis=axis / n,
    )
