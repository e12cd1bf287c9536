"""Scalar solvers used by the beamforming blocks.

Three deterministic routines live here:

* :func:`solve_quartic` -- all roots of a degree <= 4 polynomial, by Ferrari's
  closed form with lower-degree and companion-matrix fallbacks.
* :func:`brent_minimize` -- bounded scalar minimization (golden section plus
  inverse parabolic interpolation), with endpoint checks.
* :func:`bisect_monotone` -- root of a nonincreasing function, with upward
  bracket expansion.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

__all__ = [
    "QuarticCoeffs",
    "RootSet",
    "BracketSpec",
    "DegeneratePolynomialError",
    "ConvergenceError",
    "BracketError",
    "solve_quartic",
    "polyval4",
    "brent_minimize",
    "bisect_monotone",
]

DEGENERACY_RTOL = 1e-12
IMAG_RTOL = 1e-8
_GOLDEN = 0.5 * (3.0 - math.sqrt(5.0))
_CUBE_UNITY = (1.0, complex(-0.5, math.sqrt(3.0) / 2), complex(-0.5, -math.sqrt(3.0) / 2))


class DegeneratePolynomialError(ValueError):
    """All coefficients vanish, so every z is a root."""


class ConvergenceError(RuntimeError):
    """Iteration cap hit before the tolerance was met.

    The best iterate found so far is kept on ``best_x`` / ``best_f``.
    """

    def __init__(self, msg, best_x=None, best_f=None):
        super().__init__(msg)
        self.best_x = best_x
        self.best_f = best_f


class BracketError(ValueError):
    """No sign change could be found for a bisection."""


class QuarticCoeffs(NamedTuple):
    """Coefficients of ``c4 z^4 + c3 z^3 + c2 z^2 + c1 z + c0``."""

    c4: float
    c3: float
    c2: float
    c1: float
    c0: float


@dataclass
class RootSet:
    roots: list[complex]
    real_in_unit: list[float] = field(default_factory=list)

    @property
    def real(self) -> list[float]:
        return sorted(z.real for z in self.roots if _is_real(z))


@dataclass(frozen=True)
class BracketSpec:
    lo: float
    hi: float
    tol: float = 1e-4
    max_iter: int = 500

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"bracket needs lo < hi, got [{self.lo}, {self.hi}]")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


def _is_real(z: complex) -> bool:
    return abs(z.imag) <= IMAG_RTOL * (1.0 + abs(z))


def polyval4(c, z):
    """Horner evaluation of the quartic (works on arrays and complex input)."""
    c4, c3, c2, c1, c0 = c
    return (((c4 * z + c3) * z + c2) * z + c1) * z + c0


# ---------------------------------------------------------------------------
# polynomial roots
# ---------------------------------------------------------------------------

def _linear(b, a):
    return [complex(-a / b)]


def _quadratic(a, b, c):
    disc = cmath.sqrt(b * b - 4 * a * c)
    # avoid cancellation in the smaller-magnitude root
    sgn = 1.0 if (b.real if isinstance(b, complex) else b) >= 0 else -1.0
    qq = -0.5 * (b + sgn * disc)
    if qq == 0:
        return [0j, 0j]
    return [qq / a, c / qq]


def _cbrt(x: complex) -> complex:
    if x == 0:
        return 0j
    return cmath.exp(cmath.log(x) / 3.0)


def _cubic(a, b, c, d):
    d0 = b * b - 3 * a * c
    d1 = 2 * b ** 3 - 9 * a * b * c + 27 * a * a * d
    disc = cmath.sqrt(d1 * d1 - 4 * d0 ** 3)
    arg = (d1 + disc) / 2
    if abs(arg) < abs((d1 - disc) / 2):
        arg = (d1 - disc) / 2
    C = _cbrt(arg)
    if C == 0:
        # triple root
        return [complex(-b / (3 * a))] * 3
    out = []
    for w in _CUBE_UNITY:
        Cw = C * w
        out.append(-(b + Cw + d0 / Cw) / (3 * a))
    return out


def _ferrari(c4, c3, c2, c1, c0):
    """Ferrari's closed form. Returns None when the S = 0 branch is hit."""
    p = (8 * c4 * c2 - 3 * c3 ** 2) / (8 * c4 ** 2)
    q = (c3 ** 3 - 4 * c4 * c3 * c2 + 8 * c4 ** 2 * c1) / (8 * c4 ** 3)
    d0 = c2 ** 2 - 3 * c3 * c1 + 12 * c4 * c0
    d1 = 2 * c2 ** 3 - 9 * c3 * c2 * c1 + 27 * c3 ** 2 * c0 + 27 * c4 * c1 ** 2 - 72 * c4 * c2 * c0

    disc = cmath.sqrt(d1 * d1 - 4 * d0 ** 3)
    arg = (d1 + disc) / 2
    if abs(arg) < abs((d1 - disc) / 2):
        arg = (d1 - disc) / 2
    Q = _cbrt(arg)

    scale = max(abs(p), abs(q), 1e-300)
    if Q == 0:
        S = 0.5 * cmath.sqrt(-2.0 * p / 3.0)
    else:
        # every cube root of Q gives a valid S; the largest one keeps q/S well conditioned
        S = max((0.5 * cmath.sqrt(-2.0 * p / 3.0 + (Q * w + d0 / (Q * w)) / (3 * c4)) for w in _CUBE_UNITY),
                key=abs)
    if abs(S) <= 1e-7 * math.sqrt(scale):
        return None

    shift = -c3 / (4 * c4)
    r1 = cmath.sqrt(-4 * S * S - 2 * p - q / S)
    r2 = cmath.sqrt(-4 * S * S - 2 * p + q / S)
    return [
        shift + S + 0.5 * r1,
        shift + S - 0.5 * r1,
        shift - S + 0.5 * r2,
        shift - S - 0.5 * r2,
    ]


def _polish(coeffs, z, steps=3):
    """A few guarded Newton steps on the full polynomial."""
    c4, c3, c2, c1, _ = coeffs
    fz = polyval4(coeffs, z)
    for _ in range(steps):
        dz = ((4 * c4 * z + 3 * c3) * z + 2 * c2) * z + c1
        if dz == 0:
            break
        znew = z - fz / dz
        fnew = polyval4(coeffs, znew)
        if not abs(fnew) < abs(fz):
            break
        z, fz = znew, fnew
    return z


def _snap_real(z: complex) -> complex:
    return complex(z.real, 0.0) if _is_real(z) else z


def solve_quartic(c) -> RootSet:
    """All complex roots of ``c4 z^4 + c3 z^3 + c2 z^2 + c1 z + c0``.

    Parameters
    ----------
    c : QuarticCoeffs or sequence of 5 reals
        Coefficients, highest degree first.

    Returns
    -------
    RootSet
        ``roots`` holds every root (fewer than four when the leading
        coefficients are negligible); ``real_in_unit`` holds the real roots
        lying in ``[0, 1]``, sorted.

    Raises
    ------
    ValueError
        Non-finite coefficients.
    DegeneratePolynomialError
        All coefficients are zero.
    """
    c = QuarticCoeffs(*(float(v) for v in c))
    if not all(math.isfinite(v) for v in c):
        raise ValueError(f"non-finite quartic coefficients {tuple(c)}")
    cmax = max(abs(v) for v in c)
    if cmax == 0.0:
        raise DegeneratePolynomialError("degenerate polynomial: all coefficients are zero")

    # drop negligible leading terms
    lead = 0
    while abs(c[lead]) < DEGENERACY_RTOL * cmax:
        lead += 1
    deg = 4 - lead
    if deg == 0:
        # nonzero constant: no roots
        roots = []
    elif deg == 1:
        roots = _linear(c[3], c[4])
    elif deg == 2:
        roots = _quadratic(c[2], c[3], c[4])
    elif deg == 3:
        roots = _cubic(c[1], c[2], c[3], c[4])
    else:
        roots = _ferrari(*c)
        if roots is None:
            roots = [complex(r) for r in np.roots(list(c))]

    coeffs = c if deg == 4 else QuarticCoeffs(*([0.0] * lead + list(c[lead:])))
    roots = [_snap_real(_polish(coeffs, complex(z))) for z in roots]
    unit = sorted(
        min(max(z.real, 0.0), 1.0)
        for z in roots
        if z.imag == 0.0 and -1e-12 <= z.real <= 1.0 + 1e-12
    )
    return RootSet(roots=roots, real_in_unit=unit)


# ---------------------------------------------------------------------------
# Brent minimization
# ---------------------------------------------------------------------------

def brent_minimize(f: Callable[[float], float], b: BracketSpec) -> tuple[float, float]:
    """Minimize ``f`` on ``[b.lo, b.hi]``.

    Golden-section steps are mixed with inverse parabolic interpolation, as in
    Brent's ``localmin``. Both endpoints are evaluated too, and the best of
    the interior minimizer and the endpoints is returned, so
    ``f(x_star) <= min(f(lo), f(hi))`` always holds.

    Raises
    ------
    ConvergenceError
        ``b.max_iter`` exceeded; ``best_x``/``best_f`` carry the best point.
    """
    lo, hi, tol = float(b.lo), float(b.hi), float(b.tol)
    a, bb = lo, hi
    x = w = v = a + _GOLDEN * (bb - a)
    fx = fw = fv = f(x)
    d = e = 0.0
    eps = math.sqrt(np.finfo(float).eps)

    converged = False
    for _ in range(b.max_iter):
        m = 0.5 * (a + bb)
        tol1 = eps * abs(x) + tol / 3.0
        tol2 = 2.0 * tol1
        if abs(x - m) <= tol2 - 0.5 * (bb - a):
            converged = True
            break
        use_golden = True
        if abs(e) > tol1:
            r = (x - w) * (fx - fv)
            qq = (x - v) * (fx - fw)
            p = (x - v) * qq - (x - w) * r
            qq = 2.0 * (qq - r)
            if qq > 0:
                p = -p
            qq = abs(qq)
            etemp = e
            e = d
            if abs(p) < abs(0.5 * qq * etemp) and qq * (a - x) < p < qq * (bb - x):
                d = p / qq
                u = x + d
                if u - a < tol2 or bb - u < tol2:
                    d = tol1 if m >= x else -tol1
                use_golden = False
        if use_golden:
            e = (a - x) if x >= m else (bb - x)
            d = _GOLDEN * e
        u = x + (d if abs(d) >= tol1 else (tol1 if d > 0 else -tol1))
        fu = f(u)
        if fu <= fx:
            if u >= x:
                a = x
            else:
                bb = x
            v, fv = w, fw
            w, fw = x, fx
            x, fx = u, fu
        else:
            if u < x:
                a = u
            else:
                bb = u
            if fu <= fw or w == x:
                v, fv = w, fw
                w, fw = u, fu
            elif fu <= fv or v == x or v == w:
                v, fv = u, fu

    f_lo, f_hi = f(lo), f(hi)
    best_x, best_f = min(((x, fx), (lo, f_lo), (hi, f_hi)), key=lambda p: p[1])
    if not converged:
        raise ConvergenceError(
            f"brent_minimize: no convergence in {b.max_iter} iterations",
            best_x=best_x,
            best_f=best_f,
        )
    return best_x, best_f


# ---------------------------------------------------------------------------
# bisection
# ---------------------------------------------------------------------------

def bisect_monotone(
    g: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float,
    max_expand: int = 200,
    max_iter: int = 400,
) -> float:
    """Root of a nonincreasing ``g`` on ``[lo, inf)``.

    If ``g(lo) <= 0`` the answer is ``lo`` (the constraint is slack). Otherwise
    ``hi`` is pushed outward (doubling the bracket width) until ``g(hi) <= 0``
    and the bracket is bisected until ``|g| <= tol``. When floating point
    resolution runs out first, the feasible end ``hi`` (where ``g <= 0``) is
    returned.
    """
    if not hi > lo:
        raise ValueError("bisect_monotone needs hi > lo")
    glo = g(lo)
    if glo <= 0:
        return lo
    base = lo
    ghi = g(hi)
    n = 0
    while ghi > 0:
        if n >= max_expand or not math.isfinite(hi):
            raise BracketError(f"no sign change up to hi={hi:g}")
        lo, glo = hi, ghi
        hi = base + 2.0 * (hi - base)
        ghi = g(hi)
        n += 1
    if abs(ghi) <= tol:
        return hi
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        gm = g(mid)
        if abs(gm) <= tol:
            return mid
        if gm > 0:
            lo = mid
        else:
            hi = mid
    return hi
