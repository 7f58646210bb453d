"""Numerical solution of the chordal Loewner equation.

Convention: ``d/dt g_t(z) = a / (g_t(z) - U_t)`` with ``a = 2/kappa`` and
``hcap(K_t) = a t``. Two independent methods are provided:

* composition of elementary slit maps (:class:`SlitMapChain`,
  :func:`forward_map`, :func:`reverse_trace`);
* Runge-Kutta integration of the ODE for tracked points (:func:`evolve_point`).

Within one grid interval the driving function is interpolated either as
``U_k + dU * sqrt((t - t_k)/dt)`` (``"sqrt"``, which generates a straight
tilted slit exactly) or held at ``U_k`` (``"constant"``, vertical slit
followed by a jump). The composition scheme and the ODE use the same rule,
so the two methods solve the same equation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .conformal_core import _tilt_forward, sqrt_like, tilt_inverse
from .errors import DomainError, NumericalInstabilityError, SwallowedError

INTERPOLATIONS = ("sqrt", "constant")


@dataclass(frozen=True)
class DrivingPath:
    """Driving function sampled on the uniform capacity grid ``t_k = k dt``."""

    a: float
    dt: float
    values: np.ndarray
    interpolation: str = "sqrt"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if not (self.a > 0 and math.isfinite(self.a)):
            raise DomainError(f"hcap rate a must be positive, got {self.a}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise DomainError(f"dt must be positive, got {self.dt}")
        if vals.ndim != 1 or len(vals) == 0:
            raise DomainError("driving values must be a non-empty 1-d array")
        if not np.all(np.isfinite(vals)):
            raise DomainError("driving values must be finite")
        if self.interpolation not in INTERPOLATIONS:
            raise DomainError(f"interpolation must be one of {INTERPOLATIONS}")

    @property
    def steps(self) -> int:
        return len(self.values) - 1

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self.values))

    @property
    def horizon(self) -> float:
        return self.dt * self.steps

    def value_at(self, t: float) -> float:
        k = min(int(t // self.dt), self.steps - 1) if self.steps else 0
        if self.steps == 0:
            return float(self.values[0])
        tau = (t - k * self.dt) / self.dt
        du = self.values[k + 1] - self.values[k]
        if self.interpolation == "sqrt":
            return float(self.values[k] + du * math.sqrt(max(tau, 0.0)))
        return float(self.values[k]) if tau < 1 else float(self.values[k + 1])

    @classmethod
    def constant(cls, a: float, dt: float, steps: int, c: float = 0.0,
                 interpolation: str = "sqrt") -> "DrivingPath":
        return cls(a, dt, np.full(steps + 1, float(c)), interpolation)

    @classmethod
    def from_function(cls, a: float, dt: float, steps: int, fn,
                      interpolation: str = "sqrt") -> "DrivingPath":
        t = dt * np.arange(steps + 1)
        return cls(a, dt, np.array([fn(s) for s in t], dtype=float), interpolation)


# ---------------------------------------------------------------------------
# elementary maps


def tilt_step_parameters(dt: float, du: float, a: float) -> tuple[float, float, float]:
    """``(alpha, x1, x2)`` of the straight slit with capacity ``a dt`` whose tip maps to ``du``."""
    span = math.sqrt(du * du + 8 * a * dt)
    s = du / span
    alpha = (1 + s) / 2
    return alpha, -(1 - alpha) * span, alpha * span


@dataclass(frozen=True)
class SlitMapChain:
    """Ordered elementary steps ``(dt_k, dU_k)`` starting from ``u0``."""

    a: float
    u0: float
    dts: np.ndarray
    dus: np.ndarray
    scheme: str = "sqrt"

    def __post_init__(self):
        object.__setattr__(self, "dts", np.asarray(self.dts, dtype=float))
        object.__setattr__(self, "dus", np.asarray(self.dus, dtype=float))
        if self.dts.shape != self.dus.shape:
            raise DomainError("dts and dus must have the same length")
        if np.any(self.dts <= 0):
            raise DomainError("capacity steps must be positive")
        if self.scheme not in INTERPOLATIONS:
            raise DomainError(f"scheme must be one of {INTERPOLATIONS}")

    @classmethod
    def from_path(cls, path: DrivingPath) -> "SlitMapChain":
        return cls(path.a, float(path.values[0]), np.full(path.steps, path.dt),
                   np.diff(path.values), path.interpolation)

    @property
    def hcap(self) -> float:
        return self.a * float(np.sum(self.dts))

    def __len__(self) -> int:
        return len(self.dts)

    @property
    def driving(self) -> np.ndarray:
        return self.u0 + np.concatenate([[0.0], np.cumsum(self.dus)])

    def to_rows(self) -> list[tuple[float, float]]:
        return list(zip(self.dts.tolist(), self.dus.tolist()))


def _step_forward(z: np.ndarray, u: float, dt: float, du: float, a: float, scheme: str) -> np.ndarray:
    """Apply one elementary forward map to points given in absolute coordinates."""
    if scheme == "constant" or du == 0.0:
        return u + sqrt_like(z - u, 2 * a * dt)
    alpha, x1, x2 = tilt_step_parameters(dt, du, a)
    return u + _tilt_forward(z - u, alpha, x1, x2, a * dt).reshape(z.shape)


def _step_inverse(w: np.ndarray, u: float, dt: float, du: float, a: float, scheme: str) -> np.ndarray:
    """Inverse of :func:`_step_forward` on the closed upper half-plane."""
    if scheme == "constant" or du == 0.0:
        out = np.atleast_1d(sqrt_like(w - u, -2 * a * dt))
        # real points between the prevertices go to the slit, not its mirror image
        out = np.where(out.imag < 0, -out, out)
        return u + out
    alpha, x1, x2 = tilt_step_parameters(dt, du, a)
    v = np.asarray(w - u, dtype=complex)
    # clear negative zeros so the logarithms pick the upper side of the cut
    v = v.real + 1j * (v.imag + 0.0)
    return u + tilt_inverse(v, alpha, x1, x2)


def forward_map(chain: SlitMapChain, z, cutoff: float = 0.0):
    """``g_T(z)`` by composing the elementary maps in driving order.

    Raises :class:`SwallowedError` (with the step index) when a point gets
    within ``cutoff`` of the current driving value.
    """
    scalar = np.ndim(z) == 0
    z = np.atleast_1d(np.asarray(z, dtype=complex)).copy()
    # g_t commutes with conjugation, so lower half-plane points are handled by reflection
    lower = z.imag < 0
    z[lower] = np.conj(z[lower])
    u = chain.u0
    for k in range(len(chain)):
        if np.any(np.abs(z - u) <= cutoff):
            raise SwallowedError("point swallowed", step=k)
        z = _step_forward(z, u, chain.dts[k], chain.dus[k], chain.a, chain.scheme)
        u = u + chain.dus[k]
        if not np.all(np.isfinite(z)):
            raise NumericalInstabilityError("non-finite value in forward composition", step=k)
    if np.any(np.abs(z - u) <= cutoff):
        raise SwallowedError("point swallowed", step=len(chain))
    z[lower] = np.conj(z[lower])
    return complex(z[0]) if scalar else z


def inverse_map(chain: SlitMapChain, w, upto: int | None = None):
    """``g_t^{-1}(w)`` for ``t`` the time after ``upto`` steps."""
    w = np.atleast_1d(np.asarray(w, dtype=complex)).copy()
    n = len(chain) if upto is None else upto
    drv = chain.driving
    for k in range(n - 1, -1, -1):
        w = _step_inverse(w, drv[k], chain.dts[k], chain.dus[k], chain.a, chain.scheme)
    return w


# ---------------------------------------------------------------------------
# traces


@dataclass(frozen=True)
class Trace:
    times: np.ndarray
    points: np.ndarray
    tip_eps: float

    def to_rows(self) -> list[tuple[float, float, float]]:
        return [(float(t), float(p.real), float(p.imag)) for t, p in zip(self.times, self.points)]


def default_tip_eps(path: DrivingPath) -> float:
    return 1e-3 * math.sqrt(path.a * max(path.horizon, path.dt))


def reverse_trace(path: DrivingPath, tip_eps: float | None = None) -> Trace:
    """Trace points ``gamma(t_k) ~ g_{t_k}^{-1}(U_{t_k} + i tip_eps)``.

    All grid times are processed together: the inverse elementary maps are
    applied from the last step backwards, each to the points whose time is
    at least the step's end time. ``tip_eps = 0`` returns the exact tips
    of the discretized hull.
    """
    if tip_eps is None:
        tip_eps = default_tip_eps(path)
    if tip_eps < 0:
        raise DomainError("tip_eps must be non-negative")
    chain = SlitMapChain.from_path(path)
    u = path.values
    n = path.steps
    pts = u.astype(complex) + 1j * tip_eps
    pts[0] = complex(u[0], tip_eps)
    for k in range(n - 1, -1, -1):
        seg = pts[k + 1:]
        with np.errstate(all="ignore"):
            pts[k + 1:] = _step_inverse(seg, u[k], chain.dts[k], chain.dus[k], chain.a, chain.scheme)
        if not np.all(np.isfinite(pts[k + 1:])):
            raise NumericalInstabilityError("overflow while composing inverse maps", step=k)
    # points are in the closed upper half-plane up to rounding
    pts = pts.real + 1j * np.maximum(pts.imag, 0.0)
    return Trace(path.times, pts, float(tip_eps))


# ---------------------------------------------------------------------------
# ODE integration of tracked points


@dataclass
class TrackedPoint:
    """Trajectory of one point: ``Z = g_t(z) - U_t = X + iY``, ``g'_t(z)`` and ``Upsilon = Y/|g'|``."""

    z0: complex
    times: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    gprime: np.ndarray
    swallowed_at: float | None = None
    status: str = field(init=False)

    def __post_init__(self):
        self.status = "alive" if self.swallowed_at is None else "swallowed"

    @property
    def upsilon(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.Y / np.abs(self.gprime)

    @property
    def g(self) -> np.ndarray:
        return self.X + 1j * self.Y

    def final(self) -> complex:
        return complex(self.X[-1], self.Y[-1])


def swallow_cutoff(a: float, dt: float) -> float:
    return max(1e-7, 10 * math.sqrt(a * dt))


def _rhs(g, u, a):
    d = g - u
    return a / d, -a / (d * d)


def _rk4_interval(g, lg, uk, du, dt, a, interp, nsub):
    """Integrate ``(g, log g')`` across one grid interval with ``nsub`` RK4 steps.

    For square-root interpolation the substitution ``t = t_k + dt s^2``
    turns the driving function into ``U_k + dU s``, which is smooth.
    """
    h = 1.0 / nsub
    s = 0.0
    for _ in range(nsub):
        if interp == "sqrt":
            def f(si, gi):
                w = 2 * dt * si
                d = gi - (uk + du * si)
                return w * a / d, -w * a / (d * d)
        else:
            def f(si, gi):
                d = gi - uk
                return dt * a / d, -dt * a / (d * d)
        k1g, k1l = f(s, g)
        k2g, k2l = f(s + h / 2, g + h / 2 * k1g)
        k3g, k3l = f(s + h / 2, g + h / 2 * k2g)
        k4g, k4l = f(s + h, g + h * k3g)
        g = g + h / 6 * (k1g + 2 * k2g + 2 * k3g + k4g)
        lg = lg + h / 6 * (k1l + 2 * k2l + 2 * k3l + k4l)
        s += h
    return g, lg


def evolve_point(path: DrivingPath, z, horizon: float | None = None,
                 tol: float = 1e-12, max_sub: int = 4096) -> TrackedPoint | list[TrackedPoint]:
    """Integrate the Loewner ODE for ``z`` (scalar or array) along ``path``.

    Each grid interval is crossed with RK4; the number of substeps is
    doubled until two successive answers agree to ``tol`` (relative to
    ``|Z|``), capped at ``max_sub``.
    """
    zs = np.atleast_1d(np.asarray(z, dtype=complex))
    if not np.all(np.isfinite(zs)):
        raise DomainError("non-finite starting point")
    if np.any(zs.imag < 0):
        raise DomainError("points must lie in the closed upper half-plane")
    n = path.steps if horizon is None else min(path.steps, int(round(horizon / path.dt)))
    a, dt, u = path.a, path.dt, path.values
    cutoff = swallow_cutoff(a, dt)
    m = len(zs)
    g = zs.copy()
    lg = np.zeros(m, dtype=complex)
    alive = np.abs(zs - u[0]) > 0
    swallowed = np.where(alive, np.nan, 0.0)
    G = np.empty((n + 1, m), dtype=complex)
    L = np.empty((n + 1, m), dtype=complex)
    G[0], L[0] = g, lg
    nsub = 2
    for k in range(n):
        du = u[k + 1] - u[k]
        idx = np.nonzero(alive)[0]
        if len(idx):
            g0, l0 = g[idx], lg[idx]
            prev = _rk4_interval(g0, l0, u[k], du, dt, a, path.interpolation, nsub)
            while nsub < max_sub:
                cur = _rk4_interval(g0, l0, u[k], du, dt, a, path.interpolation, 2 * nsub)
                scale = np.maximum(np.abs(cur[0] - u[k + 1]), 1e-300)
                err = np.max(np.abs(cur[0] - prev[0]) / scale)
                prev = cur
                if err < tol:
                    break
                nsub *= 2
            else:
                cur = prev
            g[idx], lg[idx] = cur
            if nsub > 2:
                nsub //= 2
            gone = idx[np.abs(g[idx] - u[k + 1]) < cutoff]
            alive[gone] = False
            swallowed[gone] = (k + 1) * dt
        G[k + 1], L[k + 1] = g, lg
    times = dt * np.arange(n + 1)
    Z = G - u[: n + 1, None]
    out = []
    for j in range(m):
        last = n if np.isnan(swallowed[j]) else int(round(swallowed[j] / dt))
        sl = slice(0, last + 1)
        out.append(TrackedPoint(complex(zs[j]), times[sl], Z[sl, j].real,
                                np.maximum(Z[sl, j].imag, 0.0), np.exp(L[sl, j]),
                                None if np.isnan(swallowed[j]) else float(swallowed[j])))
    return out[0] if np.ndim(z) == 0 else out


def koebe_distance(p: TrackedPoint, index: int = -1) -> tuple[float, float]:
    """Interval ``[Upsilon/4, 4 Upsilon]`` containing the distance to the hull."""
    if p.status != "alive" and index in (-1, len(p.times) - 1):
        raise SwallowedError("point has been swallowed")
    ups = float(p.upsilon[index])
    return ups / 4, 4 * ups


# ---------------------------------------------------------------------------
# radial flow in the disk


@dataclass
class RadialTrajectory:
    times: np.ndarray
    values: np.ndarray
    log_derivative: np.ndarray
    log_derivative_at_zero: np.ndarray
    swallowed_at: float | None = None


def radial_disk_flow(path: DrivingPath, z, horizon: float | None = None,
                     nsub: int = 8, cutoff: float = 1e-7) -> RadialTrajectory:
    """Integrate ``d/dt g = g (e^{2iU} + g) / (e^{2iU} - g)`` in the unit disk.

    ``path.values`` are the angles ``U_t``; the boundary target is
    ``e^{2iU_t}``. The driving function is linearly interpolated inside a
    grid interval. ``log g'_t(0) = t`` is integrated alongside as a check.
    """
    z = complex(z)
    if not abs(z) < 1:
        raise DomainError("z must lie in the open unit disk")
    n = path.steps if horizon is None else min(path.steps, int(round(horizon / path.dt)))
    dt, u = path.dt, path.values

    def f(t0, s, g, lg, l0, k):
        e = np.exp(2j * (u[k] + (u[k + 1] - u[k]) * s))
        d = e - g
        return g * (e + g) / d, (e * e + 2 * e * g - g * g) / (d * d), 1.0

    vals = np.empty(n + 1, dtype=complex)
    lds = np.empty(n + 1, dtype=complex)
    l0s = np.empty(n + 1)
    g, lg, l0 = z, 0j, 0.0
    vals[0], lds[0], l0s[0] = g, lg, l0
    swallowed = None
    h = 1.0 / nsub
    last = n
    for k in range(n):
        s = 0.0
        for _ in range(nsub):
            k1 = f(0, s, g, lg, l0, k)
            k2 = f(0, s + h / 2, g + dt * h / 2 * k1[0], 0, 0, k)
            k3 = f(0, s + h / 2, g + dt * h / 2 * k2[0], 0, 0, k)
            k4 = f(0, s + h, g + dt * h * k3[0], 0, 0, k)
            g = g + dt * h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            lg = lg + dt * h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            l0 = l0 + dt * h / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
            s += h
        vals[k + 1], lds[k + 1], l0s[k + 1] = g, lg, l0
        if abs(g) > 1 - cutoff:
            swallowed = (k + 1) * dt
            last = k + 1
            break
    sl = slice(0, last + 1)
    return RadialTrajectory(dt * np.arange(last + 1), vals[sl], lds[sl], l0s[sl], swallowed)
