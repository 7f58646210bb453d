"""Brownian-motion functionals: capacity, bubble mass, Beurling estimate, loops.

Exit problems are solved with walk on spheres. Inside the unit half-disk a
step jumps to a uniform point on the largest circle that avoids the hull
and the real line; outside it, the walk is moved exactly with the map
``z + 1/z`` (which sends the exterior of the unit half-disk onto ``H``)
and the Cauchy exit law of ``H``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numba as nb
import numpy as np
from scipy import integrate

from .conformal_core import HullSpec, hull_domain_map, tilt_inverse, tilt_parameters
from .errors import DomainError, UnsupportedHullError
from .rng import as_stream, run_blocks
from .stats import Estimate, log_fit, mean_estimate, proportion_estimate

_KIND_CODE = {"empty": 0, "slit": 1, "tilt": 1, "halfdisk": 2}


def _hull_code(hull: HullSpec) -> tuple[int, complex, complex, float]:
    if hull.kind == "empty":
        return 0, 0j, 0j, 0.0
    if hull.kind == "halfdisk":
        return 2, complex(hull.x0), 0j, hull.size
    return 1, complex(hull.x0), hull.tip(), 0.0


@nb.njit(nogil=True, cache=True)
def _hull_dist(z, code, p0, p1, r):
    if code == 0:
        return 1e300
    if code == 2:
        return max(abs(z - p0) - r, 0.0)
    seg = p1 - p0
    L2 = seg.real * seg.real + seg.imag * seg.imag
    t = ((z - p0).real * seg.real + (z - p0).imag * seg.imag) / L2
    t = min(1.0, max(0.0, t))
    return abs(z - (p0 + t * seg))


@nb.njit(nogil=True, cache=True)
def _hcap_walk(gen, z, code, p0, p1, r, eps):
    """``Im B_tau`` for Brownian motion from ``z`` killed on the hull or the real line."""
    while True:
        if abs(z) > 1.0:
            # exact excursion outside the unit half-disk
            w = z + 1.0 / z
            x = w.real + w.imag * math.tan(math.pi * (gen.random() - 0.5))
            if abs(x) >= 2.0:
                return 0.0
            th = math.acos(x / 2.0)
            z = complex(math.cos(th), math.sin(th))
        dh = _hull_dist(z, code, p0, p1, r)
        if dh < eps:
            return z.imag
        if z.imag < eps:
            return 0.0
        rad = min(dh, z.imag)
        phi = 2 * math.pi * gen.random()
        z = z + rad * complex(math.cos(phi), math.sin(phi))


@nb.njit(nogil=True, cache=True)
def _hcap_kernel(gen, n, groups, code, p0, p1, r, eps):
    """Stratified estimates of ``(2/pi) int E[Im B_tau] sin(theta) dtheta``, one per group."""
    out = np.empty(groups)
    for g in range(groups):
        shift = gen.random()
        acc = 0.0
        for j in range(n):
            th = math.pi * (j + shift) / n
            z0 = complex(math.cos(th), math.sin(th))
            acc += _hcap_walk(gen, z0, code, p0, p1, r, eps) * math.sin(th)
        out[g] = 2.0 * acc / n
    return out


def hcap_mc(hull: HullSpec, replicas: int, rng=None, groups: int = 32, eps: float = 1e-7) -> Estimate:
    """Half-plane capacity from ``hcap = (2/pi) int_0^pi E^{e^{i theta}}[Im B_tau] sin theta dtheta``.

    Hulls larger than the unit half-disk are rescaled first. The angle is
    sampled on a randomly shifted equispaced grid in each of ``groups``
    independent groups; the standard error comes from the spread between
    groups. For the closed unit half-disk every walk stops immediately and
    the estimate is exactly 1.
    """
    if replicas < groups:
        raise DomainError("need at least one walk per group")
    if hull.kind == "empty":
        return Estimate(0.0, 0.0, replicas, {"exact": 0.0})
    reach = max(abs(hull.x0 - hull.size), abs(hull.x0 + hull.size), abs(hull.x0) + hull.size)
    scale = 1.0 if reach <= 1.0 else 1.0 / reach
    h = hull.scaled(scale)
    code, p0, p1, r = _hull_code(h)
    per = replicas // groups
    vals = _hcap_kernel(as_stream(rng).generator(0), per, groups, code, p0, p1, r, eps)
    vals = vals / scale ** 2
    return Estimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(groups)),
                    per * groups, {"exact": hull.hcap, "groups": groups})


# ---------------------------------------------------------------------------
# bubble measure


def _boundary_image(hull: HullSpec) -> tuple[float, float]:
    if hull.kind == "halfdisk":
        return hull.x0 - 2 * hull.size, hull.x0 + 2 * hull.size
    if hull.kind == "slit":
        return hull.x0 - hull.size, hull.x0 + hull.size
    if hull.kind == "tilt":
        alpha = 1 - hull.theta / math.pi
        x1, x2 = tilt_parameters(alpha, hull.size)
        return hull.x0 + x1, hull.x0 + x2
    raise UnsupportedHullError(f"no boundary image for {hull.kind}")


def _boundary_preimage(hull: HullSpec, u):
    """Point of the hull boundary (seen from the domain) mapped to real ``u``."""
    u = np.asarray(u, dtype=float)
    v = u - hull.x0
    if hull.kind == "halfdisk":
        r = hull.size
        # solve w + r^2/w = v on the upper half of |w| = r
        return hull.x0 + 0.5 * v + 0.5j * np.sqrt(np.maximum(4 * r * r - v * v, 0.0))
    if hull.kind == "slit":
        return hull.x0 + 1j * np.sqrt(np.maximum(hull.size ** 2 - v * v, 0.0))
    alpha = 1 - hull.theta / math.pi
    x1, x2 = tilt_parameters(alpha, hull.size)
    return hull.x0 + tilt_inverse(v + 0j, alpha, x1, x2)


def _bubble_integrand(hull: HullSpec):
    phi = hull_domain_map(hull)
    _, d1, _, _ = phi.derivatives(np.array([0j]))
    p0 = complex(phi(np.array([0j]))[0])
    dphi0 = float(np.real(d1[0]))

    def f(u):
        w = _boundary_preimage(hull, u)
        return dphi0 / (math.pi * (p0.real - u) ** 2) * w.imag / (math.pi * np.abs(w) ** 2) * math.pi

    return f


def _check_away(hull: HullSpec) -> None:
    if hull.kind == "empty":
        return
    if hull.distance(0j) <= 0:
        raise DomainError("hull must be at positive distance from 0")


def bubble_gamma_integral(hull: HullSpec, replicas: int = 100000, rng=None) -> Estimate:
    """Mass of Brownian bubbles at 0 that hit the hull.

    Computes ``pi int H_{dD}(0, w) H_H(w, 0) |dw|`` over the hull boundary,
    with ``D = H \\ hull``. The substitution ``u = Phi(w)`` turns the
    boundary Poisson kernel of ``D`` into that of ``H``, so the integral
    runs over a real interval. The estimate is a Monte Carlo average over
    uniform ``u`` (which carries the standard error); the adaptive
    quadrature value is in ``extra["quadrature"]``.
    """
    _check_away(hull)
    if hull.kind == "empty":
        return Estimate(0.0, 0.0, replicas, {"quadrature": 0.0})
    lo, hi = _boundary_image(hull)
    f = _bubble_integrand(hull)
    quad, qerr = integrate.quad(lambda u: float(f(np.array([u]))[0]), lo, hi, limit=200,
                                epsabs=0.0, epsrel=1e-11)
    u = lo + (hi - lo) * as_stream(rng).generator(0).random(replicas)
    est = mean_estimate((hi - lo) * f(u))
    est.extra.update({"quadrature": quad, "quadrature_error": qerr})
    return est


def bubble_schwarzian(hull: HullSpec) -> float:
    """``-S Phi(0) / 6`` for the removal map of the hull."""
    _check_away(hull)
    if hull.kind == "empty":
        return 0.0
    s = hull_domain_map(hull).schwarzian(np.array([0j]))
    return float(-np.real(s[0]) / 6)


# ---------------------------------------------------------------------------
# Beurling estimate


def beurling_exact(eps) -> np.ndarray:
    """Probability that Brownian motion from 0 leaves the unit disk without touching ``[eps, 1]``.

    The map ``sqrt`` composed with a Mobius map sends the slit disk to a
    half-disk picture in which the harmonic measure is an angle; the
    result is ``(2/pi) arctan(2 sqrt(eps)/(1 - eps))``.
    """
    e = np.asarray(eps, dtype=float)
    with np.errstate(divide="ignore"):
        return (2 / math.pi) * np.arctan2(2 * np.sqrt(e), 1 - e)


@nb.njit(nogil=True, cache=True)
def _beurling_kernel(gen, n, eps, tol):
    out = np.zeros(n, np.bool_)
    for i in range(n):
        z = 0j
        while True:
            dc = 1.0 - abs(z)
            if dc < tol:
                out[i] = True
                break
            x = min(1.0, max(eps, z.real))
            ds = abs(z - x)
            if ds < tol:
                break
            rad = min(dc, ds)
            phi = 2 * math.pi * gen.random()
            z = z + rad * complex(math.cos(phi), math.sin(phi))
    return out


@dataclass
class BeurlingResult:
    eps: np.ndarray
    prob: np.ndarray
    stderr: np.ndarray
    exponent: float
    exponent_stderr: float
    exact: np.ndarray


def beurling_mc(eps_grid: Sequence[float], replicas: int, rng=None, tol: float = 1e-7,
                workers: int = 1) -> BeurlingResult:
    """Survival probabilities ``P(B[0, tau_D] misses [eps, 1])`` and the fitted log-log slope."""
    e = np.asarray(eps_grid, dtype=float)
    if np.any((e <= 0) | (e > 1)):
        raise DomainError("eps values must lie in (0, 1]")
    stream = as_stream(rng)
    probs, ses = [], []
    for j, ej in enumerate(e):
        if ej == 1.0:
            probs.append(1.0)
            ses.append(0.0)
            continue
        parts = run_blocks(stream.child(j), replicas, lambda g, n: _beurling_kernel(g, n, ej, tol), workers)
        est = proportion_estimate(np.concatenate(parts))
        probs.append(est.estimate)
        ses.append(est.stderr)
    p = np.array(probs)
    se = np.array(ses)
    mask = (e < 1) & (p > 0)
    if mask.sum() >= 2:
        fit = log_fit(e[mask], p[mask], np.where(se[mask] > 0, se[mask], 1e-12))
        expo, expo_se = fit.slope, fit.slope_stderr
    else:
        expo, expo_se = float("nan"), float("nan")
    return BeurlingResult(e, p, se, expo, expo_se, beurling_exact(e))


# ---------------------------------------------------------------------------
# rooted Brownian loops


@dataclass
class RootedLoop:
    root: complex
    duration: float
    points: np.ndarray
    weight: float

    def hits_disk(self, center: complex, radius: float) -> bool:
        return bool(np.any(np.abs(self.points - center) <= radius))


@dataclass
class LoopSample:
    loops: list
    total_mass: float
    box: tuple
    s_min: float
    s_max: float
    long_tail_mass: float
    extra: dict = field(default_factory=dict)

    def mass(self, predicate) -> float:
        return float(sum(l.weight for l in self.loops if predicate(l)))

    def mass_hitting_both(self, d1: tuple, d2: tuple) -> float:
        return self.mass(lambda l: l.hits_disk(*d1) and l.hits_disk(*d2))

    def merge(self, other: "LoopSample") -> "LoopSample":
        if (self.box, self.s_min, self.s_max) != (other.box, other.s_min, other.s_max):
            raise DomainError("can only merge samples of the same window")
        n1, n2 = len(self.loops), len(other.loops)
        loops = [RootedLoop(l.root, l.duration, l.points, self.total_mass / (n1 + n2))
                 for l in self.loops + other.loops]
        return LoopSample(loops, self.total_mass, self.box, self.s_min, self.s_max, self.long_tail_mass)


def loop_window_mass(area: float, s_min: float, s_max: float) -> float:
    """Rooted-loop mass with root in a region of given area and duration in ``[s_min, s_max]``."""
    return area / (2 * math.pi) * (1 / s_min - 1 / s_max)


def sample_rooted_loops(box: tuple, count: int, rng=None, s_min: float = 1e-3, s_max: float = 1e2,
                        points: int = 256) -> LoopSample:
    """Sample the rooted loop measure restricted to roots in ``box`` and durations in ``[s_min, s_max]``.

    ``box = (xmin, xmax, ymin, ymax)``. Roots are uniform, durations have
    density proportional to ``1/t^2`` on the window (sampled by inverting
    its distribution function) and the shape is a planar Brownian bridge,
    closed exactly. Each loop carries weight ``total_mass / count``.
    """
    if s_min <= 0 or s_max <= s_min:
        raise DomainError("need 0 < s_min < s_max")
    xmin, xmax, ymin, ymax = (float(v) for v in box)
    if not (xmax > xmin and ymax > ymin):
        raise DomainError("box must have positive area")
    if count <= 0 or points < 2:
        raise DomainError("count must be positive and points >= 2")
    area = (xmax - xmin) * (ymax - ymin)
    mass = loop_window_mass(area, s_min, s_max)
    gen = as_stream(rng).generator(0)
    u = gen.random(count)
    dur = 1.0 / (1.0 / s_min - u * (1.0 / s_min - 1.0 / s_max))
    roots = (xmin + (xmax - xmin) * gen.random(count)) + 1j * (ymin + (ymax - ymin) * gen.random(count))
    grid = np.linspace(0.0, 1.0, points)
    loops = []
    for k in range(count):
        steps = gen.standard_normal((points - 1, 2)) * math.sqrt(dur[k] / (points - 1))
        walk = np.concatenate([[0j], np.cumsum(steps[:, 0] + 1j * steps[:, 1])])
        bridge = walk - grid * walk[-1]
        loops.append(RootedLoop(complex(roots[k]), float(dur[k]), roots[k] + bridge, mass / count))
    tail = area / (2 * math.pi) / s_max
    return LoopSample(loops, mass, (xmin, xmax, ymin, ymax), s_min, s_max, tail,
                      {"short_loops": "infinite mass below s_min, excluded"})
