"""Closed-form SLE parameters, exponents and special functions.

Everything here is deterministic. Exponent functions take the capacity
rate ``a = 2/kappa`` rather than ``kappa``; :func:`derive_params` is the
single place where the conversion happens.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Sequence, Union

import numpy as np
from scipy import integrate, special

from .errors import DomainError

Number = Union[float, Fraction]


@dataclass(frozen=True)
class SleParams:
    kappa: Number
    a: Number
    b: Number
    btilde: Number
    bhat: Number
    c_central: Number
    d_dim: Number

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("kappa", "a", "b", "btilde", "bhat", "c_central", "d_dim")}


@dataclass(frozen=True)
class ExponentValue:
    lam: float
    q_plus: float
    q_minus: float
    lambda0: float


@dataclass(frozen=True)
class ModelRow:
    model: str
    kappa: Fraction
    a: Fraction
    b: Fraction
    btilde: Fraction
    c_central: Fraction
    d_dim: Fraction


def derive_params(kappa: Number) -> SleParams:
    """Return every derived parameter for ``kappa``.

    Rational input (``int`` or ``Fraction``) is kept exact; anything else
    is treated as float. The forms used below are algebraically equal to
    the ones in terms of ``a`` but make the special values exact in
    floating point (``b = 0`` at kappa=6, ``c = 0`` at kappa=8/3).
    """
    exact = isinstance(kappa, Rational) and not isinstance(kappa, bool)
    if exact:
        k = Fraction(kappa)
        if k <= 0:
            raise DomainError(f"kappa must be positive, got {kappa}")
    else:
        k = float(kappa)
        if not math.isfinite(k) or k <= 0:
            raise DomainError(f"kappa must be positive and finite, got {kappa}")
    a = 2 / k
    b = (6 - k) / (2 * k)
    btilde = b * (k - 2) / 4
    c = (6 - k) * (3 * k - 8) / (2 * k)
    d = 1 + k / 8 if k <= 8 else (Fraction(2) if exact else 2.0)
    return SleParams(kappa=k, a=a, b=b, btilde=btilde, bhat=2 - d,
                     c_central=c, d_dim=d)


_TABLE_MODELS = (
    ("loop-erased random walk", Fraction(2)),
    ("self-avoiding walk", Fraction(8, 3)),
    ("Ising interface", Fraction(3)),
    ("harmonic explorer / free field", Fraction(4)),
    ("percolation interface", Fraction(6)),
    ("uniform spanning tree", Fraction(8)),
)


def model_table() -> list[ModelRow]:
    """Parameter rows for the standard discrete models, exact rationals."""
    rows = []
    for name, k in _TABLE_MODELS:
        p = derive_params(k)
        rows.append(ModelRow(name, p.kappa, p.a, p.b, p.btilde, p.c_central, p.d_dim))
    return rows


def b_of_a(a: float) -> float:
    return (3 * a - 1) / 2


def lambda0(a: float) -> float:
    """Smallest lambda for which q(lambda) is real."""
    return -((2 * a - 1) ** 2) / (8 * a)


def _discriminant(lam: float, a: float) -> float:
    disc = (2 * a - 1) ** 2 + 8 * a * lam
    if disc < 0:
        # tolerate rounding just below the branch point
        if disc > -1e-12 * max(1.0, abs(8 * a * lam)):
            return 0.0
        raise DomainError(f"lambda={lam} below lambda0={lambda0(a)} for a={a}")
    return disc


def q_exponent(lam: float, a: float, branch: str = "plus") -> float:
    """Root of ``q**2 + (2a-1) q - 2 a lam = 0`` on the requested branch."""
    if a <= 0:
        raise DomainError(f"a must be positive, got {a}")
    root = math.sqrt(_discriminant(lam, a))
    if branch == "plus":
        return ((1 - 2 * a) + root) / 2
    if branch == "minus":
        return ((1 - 2 * a) - root) / 2
    raise DomainError(f"unknown branch {branch!r}")


def exponent_value(lam: float, a: float) -> ExponentValue:
    return ExponentValue(lam, q_exponent(lam, a, "plus"),
                         q_exponent(lam, a, "minus"), lambda0(a))


def q_inverse(y: float, a: float) -> float:
    """Inverse of the plus branch: ``(y**2 + (2a-1) y) / (2a)``."""
    return (y * y + (2 * a - 1) * y) / (2 * a)


def two_sided_q(lam1: float, lam2: float, a: float) -> float:
    """Decay rate of the two-point boundary moment, ``q1 + q2 + q1 q2 / a``."""
    q1 = q_exponent(lam1, a)
    q2 = q_exponent(lam2, a)
    return q1 + q2 + q1 * q2 / a


def chordal_crossing_exponent(lambdas: Sequence[float], a: float) -> float:
    """``q^{-1}(q(l1) + ... + q(ln))``."""
    if len(lambdas) == 0:
        raise DomainError("at least one exponent is required")
    total = sum(q_exponent(lam, a) for lam in lambdas)
    return q_inverse(total, a)


def chordal_crossing_closed_form(n: int, a: float) -> float:
    """Crossing exponent of ``n`` copies of ``b``: ``(a n^2 + (2a-1) n) / 2``."""
    return (a * n * n + (2 * a - 1) * n) / 2


def radial_beta(lam: float, a: float) -> float:
    """Decay rate of the radial derivative moment in units of ``2a t``."""
    return lam / 2 + q_exponent(lam, a) / (4 * a)


def radial_exponent(b_arg: float, lam: float | Sequence[float], a: float) -> float:
    """Radial exponent ``xi(b_arg, lam)``.

    For ``b_arg = b(a)`` this is ``btilde + lam/2 + q(lam)/(4a)``. A general
    first argument ``x`` stands for a chordal exponent of the form
    ``xi~(b, mu)``; the cascade rule ``xi(xi~(b, mu), lam) = xi(b, xi~(mu, lam))``
    only needs ``q(mu) = q(x) - a``, so ``mu`` itself is never formed.
    A sequence ``lam`` is folded through the chordal cascade first.
    """
    if a < 0.25:
        raise DomainError(f"radial exponent needs a >= 1/4, got {a}")
    if not np.isscalar(lam):
        lam = chordal_crossing_exponent(list(lam), a)
    b = b_of_a(a)
    btilde = b * (1 - a) / (2 * a)
    q_total = q_exponent(b_arg, a) - a + q_exponent(lam, a)
    return btilde + q_inverse(q_total, a) / 2 + q_total / (4 * a)


def cardy_phi(y: float, a: float) -> float:
    """Probability that -y is swallowed after 1 for 0 < a < 1/2."""
    if not 0 < a < 0.5:
        raise DomainError(f"cardy_phi needs 0 < a < 1/2, got {a}")
    if not y > 0:
        raise DomainError(f"y must be positive, got {y}")
    if math.isinf(y):
        return 1.0
    p = 1.0 - 2 * a
    return float(special.betainc(p, p, y / (y + 1.0)))


def cardy_phi_quad(y: float, a: float) -> float:
    """Same quantity by adaptive quadrature after removing endpoint singularities.

    With ``u = s**(1/p)``, ``p = 1 - 2a``, the factor ``u**(-2a) du`` turns
    into ``ds / p``; the integral is split at 1/2 and the upper half is
    mirrored so both pieces have a regular integrand.
    """
    if not 0 < a < 0.5:
        raise DomainError(f"cardy_phi needs 0 < a < 1/2, got {a}")
    p = 1.0 - 2 * a
    norm = special.gamma(2 - 4 * a) / special.gamma(p) ** 2
    x = y / (y + 1.0)

    def left(upper: float) -> float:
        # int_0^upper u^{-2a} (1-u)^{-2a} du
        if upper <= 0:
            return 0.0
        smax = upper ** p
        val, _ = integrate.quad(lambda s: (1 - s ** (1 / p)) ** (-2 * a) / p, 0.0, smax,
                                epsabs=1e-14, epsrel=1e-12, limit=200)
        return val

    half = left(0.5)
    if x <= 0.5:
        return norm * left(x)
    return norm * (2 * half - left(1.0 - x))


def green_function(z: complex, a: float) -> float:
    """Chordal one-point function ``y^{d-2} (x^2+1)^{1/2-2a}`` at ``z = y (x + i)``."""
    if a <= 0.25:
        raise DomainError(f"green_function needs a > 1/4, got {a}")
    z = complex(z)
    if not z.imag > 0:
        raise DomainError(f"z must lie in the upper half-plane, got {z}")
    y = z.imag
    x = z.real / y
    kappa = 2 / a
    d = 1 + kappa / 8
    return y ** (d - 2) * (x * x + 1) ** (0.5 - 2 * a)


def restriction_probability(phi_prime_at_root: float) -> float:
    """Probability that SLE(8/3) avoids a hull whose removal map has ``Phi'(0)`` given."""
    v = float(phi_prime_at_root)
    if not 0 < v <= 1:
        raise DomainError(f"Phi'(0) must lie in (0, 1], got {v}")
    return v ** 0.625
