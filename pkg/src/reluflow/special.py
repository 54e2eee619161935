"""Scalar special functions used by the analytic envelopes.

Three small tools live here: a direct power-series Gauss hypergeometric
evaluator (the envelopes only ever need real arguments left of the branch
point), the exact solution map of the separable angle equation, and a
bracketed bisection root finder used to invert implicit bound relations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .errors import BracketError, ConvergenceError, DomainError

# Series terms below this fraction of the running sum no longer move a float64
# result; used as the truncation test.
_TERM_CUTOFF = 1e-16
_MAX_TERMS = 10**6


@dataclass(frozen=True)
class Hyp2F1Params:
    """Upper/lower parameters (a, b; c) of a Gauss hypergeometric series.

    c must not be zero or a negative integer, where the series is undefined.
    """

    a: float
    b: float
    c: float

    def __post_init__(self) -> None:
        c = self.c
        if c <= 0 and c == int(c):
            raise DomainError(f"lower parameter c={c} is a non-positive integer")


def hyp2f1(params: Hyp2F1Params, z: float) -> float:
    """Evaluate 2F1(a, b; c; z) by direct summation of the defining series.

    The sum sum_k (a)_k (b)_k / ((c)_k k!) z^k is accumulated until a term's
    magnitude falls below 1e-16 of the partial sum (or the series terminates,
    as it does when b is a non-positive integer).

    Raises:
        DomainError: if z >= 1 (at or beyond the branch point).
        ConvergenceError: if 10^6 terms do not reach the cutoff, which is how
            divergence for z <= -1 surfaces.
    """
    if z >= 1.0:
        raise DomainError(f"series argument z={z} must lie strictly below 1")
    a, b, c = params.a, params.b, params.c
    total = 1.0
    term = 1.0
    for k in range(_MAX_TERMS):
        term *= (a + k) * (b + k) / (c + k) * z / (k + 1)
        total += term
        if abs(term) <= _TERM_CUTOFF * abs(total):
            return total
    raise ConvergenceError(
        f"hypergeometric series did not converge in {_MAX_TERMS} terms (z={z})"
    )


def angle_from_tan_flow(phi0: float, s: float) -> float:
    """Exact solution map of d(phi)/ds = sin(phi): phi(s) through phi0 at s=0.

    Separating tan(phi/2) gives phi(s) = 2 atan(tan(phi0/2) e^s), monotone
    increasing in both arguments; s -> +inf approaches pi. Angle envelopes
    are this map evaluated at theorem-specific reparameterizations of time.
    """
    if not 0.0 < phi0 < math.pi:
        raise DomainError(f"initial angle {phi0} must lie strictly inside (0, pi)")
    # For large s, tan(phi0/2)*e^s overflows; atan saturates at pi/2 long
    # before that, so compute in the complementary form.
    t0 = math.tan(phi0 / 2.0)
    if s > 300.0:
        return math.pi
    return 2.0 * math.atan(t0 * math.exp(s))


def find_root_bracketed(
    f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-12
) -> float:
    """Bisect f on [lo, hi] until the bracket or the residual is below tol.

    Returns a point x with |f(x)| <= tol or |hi - lo| <= tol, whichever the
    iteration hits first.

    Raises:
        BracketError: if f(lo) and f(hi) have the same (nonzero) sign.
    """
    if not lo < hi:
        raise BracketError(f"empty bracket [{lo}, {hi}]")
    if tol <= 0:
        raise DomainError("tol must be positive")
    flo = f(lo)
    fhi = f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise BracketError(f"f({lo})={flo} and f({hi})={fhi} have the same sign")
    # 200 halvings take any float64 bracket below any positive tol.
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fmid = f(mid)
        if abs(fmid) <= tol or (hi - lo) <= tol:
            return mid
        if (fmid > 0) == (flo > 0):
            lo, flo = mid, fmid
        else:
            hi = mid
    raise ConvergenceError("bisection failed to meet tol in 200 iterations")
