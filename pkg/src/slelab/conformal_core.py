"""Deterministic complex-analytic primitives.

Elementary hulls and their hydrodynamically normalized maps, Poisson and
excursion kernels, the Schwarzian derivative, the flow generator acting on
locally real power series, and a vertical-slit zipper for polygonal hulls.

Square roots are taken on the branch that is continuous off the hull and
behaves like ``z`` at infinity; :func:`sqrt_like` implements it.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, SingularityError, UnsupportedHullError


def sqrt_like(z, c):
    """``sqrt(z**2 + c)`` on the branch asymptotic to ``z``.

    For real ``c > 0`` the cut is the segment ``[-i sqrt(c), i sqrt(c)]``,
    i.e. exactly the vertical slit being removed.
    """
    z = np.asarray(z, dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = z * np.sqrt(1.0 + c / (z * z))
    zero = z == 0
    if np.any(zero):
        out = np.where(zero, np.sqrt(complex(c)), out)
    return out if out.ndim else complex(out)


# ---------------------------------------------------------------------------
# hulls


@dataclass(frozen=True)
class HullSpec:
    """A compact hull attached to the real line.

    ``kind`` is one of ``"empty"``, ``"slit"`` (vertical segment of height
    ``size`` above ``x0``), ``"halfdisk"`` (closed half-disk of radius
    ``size`` centred at ``x0``) and ``"tilt"`` (segment of length ``size``
    from ``x0`` at angle ``theta`` to the positive real axis).
    """

    kind: str
    x0: float = 0.0
    size: float = 0.0
    theta: float = math.pi / 2

    def __post_init__(self):
        if self.kind not in ("empty", "slit", "halfdisk", "tilt"):
            raise DomainError(f"unknown hull kind {self.kind!r}")
        if self.kind != "empty" and not self.size > 0:
            raise DomainError(f"hull size must be positive, got {self.size}")
        if self.kind == "tilt" and not 0 < self.theta < math.pi:
            raise DomainError(f"tilt angle must lie in (0, pi), got {self.theta}")
        if not all(math.isfinite(v) for v in (self.x0, self.size, self.theta)):
            raise DomainError("hull parameters must be finite")

    # -- geometry -----------------------------------------------------------
    @property
    def hcap(self) -> float:
        if self.kind == "empty":
            return 0.0
        if self.kind == "slit":
            return self.size ** 2 / 2
        if self.kind == "halfdisk":
            return self.size ** 2
        alpha = 1 - self.theta / math.pi
        return self.size ** 2 / 2 * alpha ** (1 - 2 * alpha) * (1 - alpha) ** (2 * alpha - 1)

    @property
    def rad(self) -> float:
        """Radius of the smallest half-disk centred at ``x0`` containing the hull."""
        return 0.0 if self.kind == "empty" else self.size

    def scaled(self, r: float) -> "HullSpec":
        return HullSpec(self.kind, self.x0 * r, self.size * r, self.theta)

    def shifted(self, dx: float) -> "HullSpec":
        return HullSpec(self.kind, self.x0 + dx, self.size, self.theta)

    def tip(self) -> complex:
        if self.kind in ("slit", "tilt"):
            return self.x0 + self.size * complex(math.cos(self.theta if self.kind == "tilt" else math.pi / 2),
                                                 math.sin(self.theta if self.kind == "tilt" else math.pi / 2))
        raise DomainError("only slits have a tip")

    def distance(self, z):
        """Euclidean distance from ``z`` to the hull (0 inside)."""
        z = np.asarray(z, dtype=complex)
        if self.kind == "empty":
            return np.full(z.shape, np.inf) if z.ndim else math.inf
        if self.kind == "halfdisk":
            c = complex(self.x0, 0.0)
            r = self.size
            inside = np.abs(z - c) <= r
            # nearest point of the closed half-disk to an upper half-plane point
            d = np.maximum(np.abs(z - c) - r, 0.0)
            below = z.imag < 0
            if np.any(below):
                # only used for robustness; points below the axis are outside the domain
                x = np.clip(z.real, self.x0 - r, self.x0 + r)
                d = np.where(below, np.abs(z - x), d)
            d = np.where(inside & ~below, 0.0, d)
            return d if d.ndim else float(d)
        p0 = complex(self.x0, 0.0)
        p1 = self.tip()
        seg = p1 - p0
        t = np.clip(((z - p0) * np.conj(seg)).real / abs(seg) ** 2, 0.0, 1.0)
        d = np.abs(z - (p0 + t * seg))
        return d if d.ndim else float(d)

    def contains(self, z, tol: float = 0.0):
        return self.distance(z) <= tol

    def boundary_points(self, n: int) -> np.ndarray:
        """Points along the boundary arc seen from the domain, ordered from the left base point."""
        if self.kind == "halfdisk":
            th = np.linspace(math.pi, 0.0, n)
            return self.x0 + self.size * np.exp(1j * th)
        if self.kind in ("slit", "tilt"):
            t = np.linspace(0.0, 1.0, n)
            return self.x0 + t * (self.tip() - self.x0)
        return np.zeros(0, dtype=complex)

    def spec_string(self) -> str:
        if self.kind == "empty":
            return "empty"
        if self.kind == "slit":
            return f"slit:{self.x0!r},{self.size!r}"
        if self.kind == "halfdisk":
            return f"halfdisk:{self.x0!r},{self.size!r}"
        return f"tilt:{self.x0!r},{self.size!r},{self.theta!r}"


_HULL_RE = re.compile(r"^\s*(slit|halfdisk|tilt|empty)\s*(?::\s*(.*))?$")


def parse_hull(text: str) -> HullSpec:
    """Parse ``slit:x0,h | halfdisk:x0,r | tilt:x0,l,theta | empty``."""
    m = _HULL_RE.match(text)
    if not m:
        raise DomainError(f"cannot parse hull description {text!r}")
    kind, args = m.group(1), m.group(2)
    if kind == "empty":
        if args:
            raise DomainError("empty hull takes no parameters")
        return HullSpec("empty")
    try:
        vals = [float(v) for v in (args or "").split(",")]
    except ValueError as exc:
        raise DomainError(f"non-numeric hull parameter in {text!r}") from exc
    need = 3 if kind == "tilt" else 2
    if len(vals) != need:
        raise DomainError(f"{kind} needs {need} parameters, got {len(vals)}")
    if kind == "tilt":
        return HullSpec("tilt", vals[0], vals[1], vals[2])
    return HullSpec(kind, vals[0], vals[1])


# ---------------------------------------------------------------------------
# tilted slit: explicit inverse map and Newton inversion


def tilt_parameters(alpha: float, length: float) -> tuple[float, float]:
    """Prevertices ``(x1, x2)`` of the slit of given length at angle ``pi (1 - alpha)``."""
    span = length / (alpha ** alpha * (1 - alpha) ** (1 - alpha))
    return -(1 - alpha) * span, alpha * span


def tilt_inverse(w, alpha: float, x1: float, x2: float):
    """``(w - x1)**alpha (w - x2)**(1 - alpha)``: maps the half-plane onto H minus a slit at 0."""
    w = np.asarray(w, dtype=complex)
    return np.exp(alpha * np.log(w - x1) + (1 - alpha) * np.log(w - x2))


def _tilt_forward(z, alpha: float, x1: float, x2: float, hcap: float):
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    w = sqrt_like(z, 2 * hcap)
    w = np.atleast_1d(w).astype(complex)
    for _ in range(100):
        f = tilt_inverse(w, alpha, x1, x2)
        dlog = alpha / (w - x1) + (1 - alpha) / (w - x2)
        step = (f - z) / (f * dlog)
        w_new = w - step
        # stay in the closed upper half-plane
        bad = w_new.imag < 0
        if np.any(bad):
            w_new = np.where(bad, w - step / 2, w_new)
            w_new = np.where(w_new.imag < 0, w_new.real + 0j, w_new)
        done = np.abs(w_new - w) <= 1e-15 * np.maximum(1.0, np.abs(w))
        w = w_new
        if np.all(done):
            break
    return w


# ---------------------------------------------------------------------------
# hull maps


def slit_map(hull: HullSpec, z):
    """Hydrodynamically normalized map ``g_K`` from ``H \\ K`` onto ``H``."""
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag < 0):
        raise DomainError("slit_map is defined on the closed upper half-plane")
    if hull.kind == "empty":
        return z if z.ndim else complex(z)
    inside = np.asarray(hull.distance(z)) < 1e-14 * max(1.0, hull.size)
    if hull.kind == "halfdisk":
        inside = np.asarray(hull.distance(z)) <= 0.0
        inside = inside & (np.abs(np.abs(z - hull.x0) - hull.size) > 1e-15)
    if np.any(inside):
        raise DomainError("point lies inside the hull")
    if hull.kind == "slit":
        out = hull.x0 + sqrt_like(z - hull.x0, hull.size ** 2)
    elif hull.kind == "halfdisk":
        out = z + hull.size ** 2 / (z - hull.x0)
    else:
        alpha = 1 - hull.theta / math.pi
        x1, x2 = tilt_parameters(alpha, hull.size)
        out = hull.x0 + _tilt_forward(z - hull.x0, alpha, x1, x2, hull.hcap).reshape(z.shape)
    out = np.asarray(out, dtype=complex)
    return out if out.ndim else complex(out)


@dataclass(frozen=True)
class DomainMap:
    """Removal map ``Phi`` of a hull with its first three derivatives."""

    hull: HullSpec

    def _check(self, z):
        z = np.asarray(z, dtype=complex)
        if self.hull.kind != "empty" and np.any(np.asarray(self.hull.distance(z)) <= 0):
            raise DomainError("evaluation point lies in the hull closure")
        return z

    def derivatives(self, z):
        """Return ``(Phi, Phi', Phi'', Phi''')`` at ``z``."""
        z = self._check(z)
        h = self.hull
        if h.kind == "empty":
            one = np.ones_like(z)
            return z, one, 0 * one, 0 * one
        if h.kind == "halfdisk":
            u = z - h.x0
            r2 = h.size ** 2
            return z + r2 / u, 1 - r2 / u ** 2, 2 * r2 / u ** 3, -6 * r2 / u ** 4
        if h.kind == "slit":
            u = z - h.x0
            s = sqrt_like(u, h.size ** 2)
            c = h.size ** 2
            return h.x0 + s, u / s, c / s ** 3, -3 * c * u / s ** 5
        alpha = 1 - h.theta / math.pi
        x1, x2 = tilt_parameters(alpha, h.size)
        w = _tilt_forward(z - h.x0, alpha, x1, x2, h.hcap).reshape(np.shape(z))
        f = tilt_inverse(w, alpha, x1, x2)
        l1 = alpha / (w - x1) + (1 - alpha) / (w - x2)
        l2 = -alpha / (w - x1) ** 2 - (1 - alpha) / (w - x2) ** 2
        l3 = 2 * alpha / (w - x1) ** 3 + 2 * (1 - alpha) / (w - x2) ** 3
        f1 = f * l1
        f2 = f * (l2 + l1 ** 2)
        f3 = f * (l3 + 3 * l1 * l2 + l1 ** 3)
        return h.x0 + w, 1 / f1, -f2 / f1 ** 3, (3 * f2 ** 2 - f1 * f3) / f1 ** 5

    def __call__(self, z):
        return self.derivatives(z)[0]

    def prime(self, z):
        return self.derivatives(z)[1]

    def schwarzian(self, z):
        _, d1, d2, d3 = self.derivatives(z)
        if np.any(d1 == 0):
            raise SingularityError("Phi' vanishes")
        return d3 / d1 - 1.5 * (d2 / d1) ** 2


def hull_domain_map(hull: HullSpec) -> DomainMap:
    """Map from ``H \\ hull`` onto ``H`` with ``Phi(z) = z + o(1)`` at infinity."""
    return DomainMap(hull)


# ---------------------------------------------------------------------------
# kernels


def poisson_kernel_H(x: float, z: complex) -> float:
    """Poisson kernel of the upper half-plane, ``y / (pi ((u - x)^2 + y^2))``."""
    z = complex(z)
    if not z.imag > 0:
        raise DomainError(f"z must lie in the upper half-plane, got {z}")
    return z.imag / (math.pi * ((z.real - x) ** 2 + z.imag ** 2))


def boundary_poisson_kernel_H(x: float, y: float) -> float:
    """Excursion (boundary) Poisson kernel of H between real points, ``1/(pi (x-y)^2)``."""
    if x == y:
        raise SingularityError("boundary Poisson kernel is singular on the diagonal")
    return 1.0 / (math.pi * (x - y) ** 2)


def excursion_kernel_strip(z: complex, y_prime: float, terms: int = 200) -> float:
    """Poisson kernel of ``{x > 0, 0 < y < pi}`` at the boundary point ``i y'``.

    Separation of variables gives ``(2/pi) sum_n e^{-n x} sin(n y) sin(n y')``.
    """
    z = complex(z)
    x, y = z.real, z.imag
    if not (x > 0 and 0 < y < math.pi):
        raise DomainError(f"z={z} is outside the half-infinite strip")
    if not 0 < y_prime < math.pi:
        raise DomainError(f"y'={y_prime} is not on the short edge")
    n = np.arange(1, terms + 1)
    return float(2 / math.pi * np.sum(np.exp(-n * x) * np.sin(n * y) * np.sin(n * y_prime)))


# ---------------------------------------------------------------------------
# derivatives and the Schwarzian


def cauchy_derivatives(f: Callable, z: complex, radius: float | None = None,
                       nodes: int = 64) -> tuple[complex, complex, complex, complex]:
    """First three derivatives of an analytic ``f`` by the trapezoid rule on a circle."""
    z = complex(z)
    if radius is None:
        radius = 1e-2 * max(1.0, abs(z))
    k = np.arange(nodes)
    e = np.exp(2j * np.pi * k / nodes)
    vals = np.asarray(f(z + radius * e), dtype=complex)
    # Taylor coefficients c_n = mean(f * e^{-i n theta}) / radius^n
    coef = [np.mean(vals * e ** (-n)) / radius ** n for n in range(4)]
    return coef[0], coef[1], 2 * coef[2], 6 * coef[3]


def schwarzian(f, z: complex):
    """Schwarzian derivative ``f'''/f' - 1.5 (f''/f')^2``.

    ``f`` may be a :class:`DomainMap`, a :class:`PowerSeries`, a tuple of
    callables ``(f, f', f'', f''')`` or a plain analytic callable (whose
    derivatives are then obtained from a Cauchy integral).
    """
    if isinstance(f, DomainMap):
        return f.schwarzian(z)
    if isinstance(f, PowerSeries):
        d1, d2, d3 = f.derivative(1)(z), f.derivative(2)(z), f.derivative(3)(z)
    elif isinstance(f, tuple):
        d1, d2, d3 = (g(z) for g in f[1:4])
    else:
        _, d1, d2, d3 = cauchy_derivatives(f, z)
    if d1 == 0:
        raise SingularityError("f' vanishes")
    return d3 / d1 - 1.5 * (d2 / d1) ** 2


# ---------------------------------------------------------------------------
# power series and the flow generator


@dataclass(frozen=True)
class PowerSeries:
    """Truncated series ``sum_n coef[n] z**n`` with plain coefficients."""

    coef: tuple

    def __init__(self, coef: Sequence[float]):
        object.__setattr__(self, "coef", tuple(float(c) for c in coef))

    @property
    def order(self) -> int:
        return len(self.coef) - 1

    def __call__(self, z):
        return np.polynomial.polynomial.polyval(z, self.coef)

    def derivative(self, k: int = 1) -> "PowerSeries":
        c = np.polynomial.polynomial.polyder(np.array(self.coef), k) if len(self.coef) > k else [0.0]
        return PowerSeries(c)

    @classmethod
    def from_factorial(cls, q: Sequence[float]) -> "PowerSeries":
        """Build from Taylor data ``q_n = F^{(n)}(0)``."""
        return cls([qn / math.factorial(n) for n, qn in enumerate(q)])


def series_reciprocal(p: Sequence[float], n: int) -> np.ndarray:
    """First ``n`` coefficients of ``1 / p(z)``; needs ``p[0] != 0``."""
    p = np.asarray(p, dtype=float)
    if p[0] == 0:
        raise SingularityError("series with zero constant term has no reciprocal")
    out = np.zeros(n)
    out[0] = 1 / p[0]
    for k in range(1, n):
        m = min(k, len(p) - 1)
        out[k] = -np.dot(p[1:m + 1], out[k - 1::-1][:m]) / p[0]
    return out


def lambda_flow(F: PowerSeries) -> PowerSeries:
    """Series of ``F'(0)^2 / (F(z) - F(0)) - F'(z) / z`` through order ``N - 2``."""
    q = np.asarray(F.coef, dtype=float)
    if len(q) < 3:
        raise DomainError("need at least a quadratic term")
    if not q[1] > 0:
        raise DomainError(f"F'(0) must be positive, got {q[1]}")
    n = len(q) - 1  # truncation order of F
    p = q[1:]  # (F - F(0)) / z
    recip = series_reciprocal(p, n)
    fprime = np.array([(k + 1) * q[k + 1] for k in range(n)])
    numer = q[1] ** 2 * recip - fprime
    return PowerSeries(numer[1:])


# ---------------------------------------------------------------------------
# zipper for polygonal hulls


class ZipperMap:
    """Hydrodynamically normalized map removing a polygonal curve.

    ``points`` runs from a real base point into the half-plane. The curve
    is unzipped one vertex at a time with vertical-slit maps (each vertex
    is sent to the real line), so the composition removes a curve through
    every vertex that is close to the polyline for fine sampling.
    """

    def __init__(self, points: Sequence[complex]):
        pts = np.asarray(points, dtype=complex)
        if len(pts) < 2:
            raise DomainError("need at least two points")
        if abs(pts[0].imag) > 1e-14:
            raise DomainError("curve must start on the real line")
        steps = []
        cur = pts[1:].copy()
        for k in range(len(cur)):
            x, y = cur[k].real, max(cur[k].imag, 0.0)
            steps.append((x, y * y))
            if k + 1 < len(cur):
                cur[k + 1:] = x + _reflect_sqrt(cur[k + 1:] - x, y * y)
        self._steps = steps
        self.hcap = sum(c for _, c in steps) / 2

    def __call__(self, w):
        w = np.asarray(w, dtype=complex)
        for x, c in self._steps:
            w = x + _reflect_sqrt(w - x, c)
        return w if w.ndim else complex(w)


def _reflect_sqrt(u, c):
    """``sqrt_like`` extended to the lower half-plane by reflection."""
    u = np.asarray(u, dtype=complex)
    lower = u.imag < 0
    s = sqrt_like(np.where(lower, np.conj(u), u), c)
    return np.where(lower, np.conj(s), s)
