"""Stochastic layer: driving functions and one-dimensional diffusions.

Conventions: ``a = 2/kappa``, the Loewner flow is ``d/dt g = a/(g - U)``
and chordal SLE has ``U_t = -B_t`` for a standard Brownian motion ``B``.
Every driver builds its path from the same noise ``dW_k = sqrt(dt) N_k``
with the update ``U_{k+1} = U_k + drift_k dt - dW_k``, so a driver whose
drift vanishes identically reproduces the chordal path bit for bit.

Several estimators do not step the Loewner equation in capacity time.
They use an exact reduction to a one-dimensional diffusion together with
a time change under which the diffusion has bounded coefficients:

* boundary moments: in the clock ``s = int dt / X^2`` the process
  ``log X`` is a Brownian motion with drift ``a - 1/2`` and
  ``g'_t(x) = exp(-a s)``;
* angular diffusions ``dTheta = mu cot(Theta) dt + dW``: with
  ``w = log tan(Theta/2)`` and ``dtau = dt / sin^2 Theta`` they become
  ``dw = (1/2 - mu) tanh(w) dtau + dW`` and ``t = int sech^2(w) dtau``;
* hitting order of two boundary points: the shape variable
  ``Z = X/(X - X~)`` in logit form is an autonomous diffusion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numba as nb
import numpy as np
from scipy import special, stats

from .conformal_core import HullSpec, sqrt_like
from .errors import DomainError
from .loewner_engine import DrivingPath, swallow_cutoff
from .params_exponents import q_exponent
from .rng import RngStream, as_stream, concat_blocks, run_blocks
from .stats import Estimate, fit_line, log_fit, mean_estimate, median_of_means, proportion_estimate

DRIVER_KINDS = ("chordal", "kapparho", "radial", "two-sided", "subdomain")


def _check_kappa(kappa: float) -> float:
    kappa = float(kappa)
    if not (kappa > 0 and math.isfinite(kappa)):
        raise DomainError(f"kappa must be positive and finite, got {kappa}")
    return kappa


def _check_grid(dt: float, steps: int) -> None:
    if not (dt > 0 and math.isfinite(dt)):
        raise DomainError(f"dt must be positive, got {dt}")
    if int(steps) < 0:
        raise DomainError("steps must be non-negative")


def _noise(rng, dt: float, steps: int) -> np.ndarray:
    return math.sqrt(dt) * as_stream(rng).generator(0).standard_normal(int(steps))


# ---------------------------------------------------------------------------
# driving functions


@dataclass(frozen=True)
class DriverSpec:
    kind: str
    kappa: float
    dt: float
    steps: int
    rho: float = 0.0
    force_point: float = 1.0
    target: complex = 1j
    hull: HullSpec | None = None

    def __post_init__(self):
        if self.kind not in DRIVER_KINDS:
            raise DomainError(f"driver kind must be one of {DRIVER_KINDS}")
        _check_kappa(self.kappa)
        _check_grid(self.dt, self.steps)
        if self.kind == "kapparho" and self.force_point == 0:
            raise DomainError("force point must differ from 0")
        if self.kind in ("radial", "two-sided") and not complex(self.target).imag > 0:
            raise DomainError("target must lie in the upper half-plane")


@dataclass
class DriverResult:
    path: DrivingPath
    truncated_at: int | None = None
    force_point: np.ndarray | None = None
    absorbed: bool = False

    @property
    def truncated(self) -> bool:
        return self.truncated_at is not None


@dataclass
class DiffusionState:
    value: float
    time: float
    absorbed: bool = False


def sample_chordal_driver(kappa: float, dt: float, steps: int, rng=None) -> DrivingPath:
    """``U_k = -(dW_0 + ... + dW_{k-1})``."""
    kappa = _check_kappa(kappa)
    _check_grid(dt, steps)
    dw = _noise(rng, dt, steps)
    u = np.empty(int(steps) + 1)
    u[0] = 0.0
    for k in range(int(steps)):
        u[k + 1] = u[k] - dw[k]
    return DrivingPath(2 / kappa, dt, u, "constant")


def sample_kappa_rho_driver(kappa: float, rho: float, x: float, dt: float, steps: int,
                            rng=None) -> DriverResult:
    """Euler scheme for ``dU = q/(U - K) dt - dW``, ``dK = a/(K - U) dt``, ``q = rho/kappa``.

    A collision ``|K - U| < cutoff`` ends the path (``absorbed``).
    """
    kappa = _check_kappa(kappa)
    _check_grid(dt, steps)
    if x == 0:
        raise DomainError("force point must differ from 0")
    a, q = 2 / kappa, rho / kappa
    dw = _noise(rng, dt, steps)
    cut = swallow_cutoff(a, dt)
    u = np.empty(int(steps) + 1)
    kp = np.empty(int(steps) + 1)
    u[0], kp[0] = 0.0, float(x)
    n = int(steps)
    for k in range(int(steps)):
        d = kp[k] - u[k]
        if q == 0:
            u[k + 1] = u[k] - dw[k]
        else:
            u[k + 1] = u[k] + q / (u[k] - kp[k]) * dt - dw[k]
        kp[k + 1] = kp[k] + a / d * dt
        if abs(kp[k + 1] - u[k + 1]) < cut:
            n = k + 1
            break
    absorbed = n < int(steps)
    return DriverResult(DrivingPath(a, dt, u[: n + 1], "constant"),
                        n if absorbed else None, kp[: n + 1], absorbed)


def _co_evolve(kappa, w, dt, steps, rng, coef):
    """Driver with drift ``coef * X/(X^2+Y^2)`` for the tracked point ``w``."""
    kappa = _check_kappa(kappa)
    _check_grid(dt, steps)
    w = complex(w)
    if not w.imag > 0:
        raise DomainError("target must lie in the upper half-plane")
    a = 2 / kappa
    dw = _noise(rng, dt, steps)
    cut = swallow_cutoff(a, dt)
    u = np.empty(int(steps) + 1)
    u[0] = 0.0
    z = w
    n = int(steps)
    for k in range(int(steps)):
        if coef == 0:
            u[k + 1] = u[k] - dw[k]
        else:
            u[k + 1] = u[k] + coef * z.real / abs(z) ** 2 * dt - dw[k]
        # exact flow over the step for the frozen driving value, then the jump
        z = complex(sqrt_like(z, 2 * a * dt)) - (u[k + 1] - u[k])
        if abs(z) < cut:
            n = k + 1
            break
    trunc = n if n < int(steps) else None
    return DriverResult(DrivingPath(a, dt, u[: n + 1], "constant"), trunc)


def sample_radial_driver(kappa: float, w: complex, dt: float, steps: int, rng=None) -> DriverResult:
    """Radial SLE from 0 to ``w``: drift ``(3a - 1) X/(X^2 + Y^2)``; stops when ``w`` is swallowed."""
    a = 2 / _check_kappa(kappa)
    return _co_evolve(kappa, w, dt, steps, rng, 3 * a - 1)


def sample_two_sided_radial_driver(kappa: float, z: complex, dt: float, steps: int,
                                   rng=None) -> DriverResult:
    """Chordal SLE weighted by the Green's-function martingale: drift ``(4a - 1) X/(X^2 + Y^2)``."""
    a = 2 / _check_kappa(kappa)
    return _co_evolve(kappa, z, dt, steps, rng, 4 * a - 1)


def _halfdisk_arc(hull: HullSpec, m: int) -> np.ndarray:
    phi = np.linspace(0.0, math.pi, m)
    return hull.x0 + hull.size * np.exp(1j * phi)


def subdomain_driver(kappa: float, hull: HullSpec, dt: float, steps: int, rng=None,
                     arc_points: int = 64) -> DriverResult:
    """Driver of SLE in ``H`` minus a half-disk hull, seen through the removal map.

    The drift is ``b Phi_t''(U)/Phi_t'(U)``. The image hull ``g_t(K)`` is
    tracked through sample points on its boundary and ``Phi_t`` is replaced
    by the removal map of the half-disk through the images of the base
    endpoints that contains all tracked points. This is exact at ``t = 0``.
    The path stops when ``U`` comes within the swallowing cutoff of that
    half-disk (``truncated_at``).
    """
    kappa = _check_kappa(kappa)
    _check_grid(dt, steps)
    a = 2 / kappa
    # this form is exactly 0.0 at kappa = 6
    b = (6 - kappa) / (2 * kappa)
    if hull.kind == "empty":
        return DriverResult(sample_chordal_driver(kappa, dt, steps, rng))
    if hull.kind != "halfdisk":
        raise DomainError("subdomain_driver tracks half-disk hulls only")
    if hull.x0 - hull.size <= 0 <= hull.x0 + hull.size:
        raise DomainError("hull must be at positive distance from 0")
    dw = _noise(rng, dt, steps)
    cut = swallow_cutoff(a, dt)
    pts = _halfdisk_arc(hull, arc_points)
    u = np.empty(int(steps) + 1)
    u[0] = 0.0
    n = int(steps)
    for k in range(int(steps)):
        c = 0.5 * (pts[0].real + pts[-1].real)
        radius = float(np.max(np.abs(pts - c)))
        gap = abs(u[k] - c) - radius
        if gap < cut:
            n = k
            break
        if b == 0:
            u[k + 1] = u[k] - dw[k]
        else:
            d = u[k] - c
            r2 = radius * radius
            drift = (2 * r2 / d ** 3) / (1 - r2 / d ** 2)
            u[k + 1] = u[k] + b * drift * dt - dw[k]
        pts = u[k] + sqrt_like(pts - u[k], 2 * a * dt)
    trunc = n if n < int(steps) else None
    return DriverResult(DrivingPath(a, dt, u[: n + 1], "constant"), trunc)


def sample_driver(driver: DriverSpec, rng=None) -> DriverResult:
    if driver.kind == "chordal":
        return DriverResult(sample_chordal_driver(driver.kappa, driver.dt, driver.steps, rng))
    if driver.kind == "kapparho":
        return sample_kappa_rho_driver(driver.kappa, driver.rho, driver.force_point, driver.dt, driver.steps, rng)
    if driver.kind == "radial":
        return sample_radial_driver(driver.kappa, driver.target, driver.dt, driver.steps, rng)
    if driver.kind == "two-sided":
        return sample_two_sided_radial_driver(driver.kappa, driver.target, driver.dt, driver.steps, rng)
    hull = driver.hull if driver.hull is not None else HullSpec("empty")
    return subdomain_driver(driver.kappa, hull, driver.dt, driver.steps, rng)


# ---------------------------------------------------------------------------
# Bessel absorption


def bessel_hit_probability_exact(a: float, x: float, horizon: float) -> float:
    """``P(T_0 <= horizon)`` for ``dZ = a/Z dt + dB`` started at ``x``."""
    if a <= 0 or x <= 0:
        raise DomainError("need a > 0 and x > 0")
    if a >= 0.5:
        return 0.0
    return float(special.gammaincc(0.5 - a, x * x / (2 * horizon)))


@nb.njit(nogil=True, cache=True)
def _bessel_euler_kernel(gen, n, a, x, horizon, dt, cutoff):
    hit = np.zeros(n, np.bool_)
    for i in range(n):
        z = x
        t = 0.0
        while t < horizon:
            # local step shrinks near 0 so the drift a/z stays resolved
            h = min(dt * max(z * z, 1.0), horizon - t)
            h = max(h, 1e-12)
            z = z + a / z * h + math.sqrt(h) * gen.standard_normal()
            t += h
            if z < cutoff:
                hit[i] = True
                break
    return hit


def bessel_hit_probability(a: float, x: float, horizon: float, replicas: int, rng=None,
                           method: str = "exact", grid: int = 400, dt: float = 1e-4,
                           cutoff: float = 1e-6, workers: int = 1) -> Estimate:
    """Monte Carlo frequency of absorption at 0 before ``horizon``.

    ``method="exact"`` samples the squared process ``Z^2`` (a squared Bessel
    process of dimension ``2a + 1``) exactly on a time grid and kills each
    grid interval with the exact bridge probability of touching 0, so the
    estimate has no discretization bias. ``method="euler"`` uses an Euler
    scheme with local step ``dt max(Z^2, 1)`` and absorption cutoff.
    """
    if a <= 0 or x <= 0 or horizon <= 0:
        raise DomainError("need a > 0, x > 0 and horizon > 0")
    if method == "euler":
        parts = run_blocks(rng, replicas,
                           lambda g, n: _bessel_euler_kernel(g, n, a, x, horizon, dt, cutoff), workers)
        return proportion_estimate(concat_blocks(parts), method=method)
    if method != "exact":
        raise DomainError(f"unknown method {method!r}")
    delta = 2 * a + 1
    nu = delta / 2 - 1
    # geometric grid resolves the early phase where most absorption happens
    times = np.concatenate([[0.0], np.geomspace(min(1e-4 * x * x, horizon), horizon, grid)])

    def block(gen, n):
        sq = np.full(n, x * x)
        dead = np.zeros(n, bool)
        for t0, t1 in zip(times[:-1], times[1:]):
            h = t1 - t0
            live = ~dead
            if not live.any():
                break
            cur = sq[live]
            new = h * gen.noncentral_chisquare(delta, cur / h)
            if nu < 0:
                zarg = np.sqrt(cur * new) / h
                with np.errstate(divide="ignore", invalid="ignore"):
                    keep = special.ive(-nu, zarg) / special.ive(nu, zarg)
                keep = np.where(zarg > 0, keep, 0.0)
                killed = gen.random(len(cur)) >= keep
                idx = np.nonzero(live)[0]
                dead[idx[killed]] = True
            sq[live] = new
        return dead

    hits = concat_blocks(run_blocks(rng, replicas, block, workers))
    return proportion_estimate(hits, method=method,
                               exact=bessel_hit_probability_exact(a, x, horizon))


# ---------------------------------------------------------------------------
# boundary moments


@nb.njit(nogil=True, cache=True)
def _boundary_kernel(gen, n, a, x, tgrid, ds, smax):
    """Per replica: ``s(t_k) = int_0^{t_k} du/X_u^2`` and ``log X_{t_k}``."""
    nt = len(tgrid)
    S = np.full((n, nt), np.inf)
    L = np.zeros((n, nt))
    mu = a - 0.5
    sd = math.sqrt(ds)
    for i in range(n):
        lx = math.log(x)
        s = 0.0
        t = 0.0
        k = 0
        while k < nt and s < smax:
            lx_new = lx + mu * ds + sd * gen.standard_normal()
            t_new = t + 0.5 * (math.exp(2 * lx) + math.exp(2 * lx_new)) * ds
            while k < nt and tgrid[k] <= t_new:
                f = (tgrid[k] - t) / (t_new - t)
                S[i, k] = s + f * ds
                L[i, k] = lx + f * (lx_new - lx)
                k += 1
            lx, s, t = lx_new, s + ds, t_new
    return S, L


@dataclass
class MomentResult:
    times: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    median_of_means: np.ndarray
    slope: float
    slope_stderr: float
    martingale: np.ndarray | None = None
    martingale_stderr: np.ndarray | None = None
    replicas: int = 0
    extra: dict = field(default_factory=dict)


def _moment_summary(times, samples, mart=None, fit_mask=None, log_time=True, **extra):
    mean = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / math.sqrt(len(samples))
    mom = median_of_means(samples)
    mask = np.ones(len(times), bool) if fit_mask is None else fit_mask
    if np.any(mean[mask] <= 0):
        slope, sse = float("nan"), float("nan")
    elif log_time:
        fit = log_fit(times[mask], mean[mask], se[mask])
        slope, sse = fit.slope, fit.slope_stderr
    else:
        rel = se[mask] / mean[mask]
        fit = fit_line(times[mask], np.log(mean[mask]), 1 / np.maximum(rel, 1e-300) ** 2)
        slope, sse = fit.slope, fit.slope_stderr
    out = MomentResult(np.asarray(times), mean, se, mom, slope, sse, replicas=len(samples), extra=extra)
    if mart is not None:
        out.martingale = mart.mean(axis=0)
        out.martingale_stderr = mart.std(axis=0, ddof=1) / math.sqrt(len(mart))
    return out


def boundary_moment(lam: float, a: float, times: Sequence[float], x: float = 1.0,
                    replicas: int = 10000, rng=None, ds: float = 1e-3,
                    jmin: float = 1e-8, workers: int = 1) -> MomentResult:
    """Estimate ``E[g'_t(x)^lam]`` on a grid of times and fit the log-log slope.

    ``g'_t(x)^lam = exp(-a lam s_t)``; paths stop once this drops below
    ``jmin`` (their later contributions are set to 0 and counted in
    ``extra["stopped"]``). The martingale ``X_t^q g'_t(x)^lam`` is
    reported alongside and should stay at ``x^q``.
    """
    if x <= 0:
        raise DomainError("x must be positive")
    t = np.asarray(times, dtype=float)
    if np.any(np.diff(t) <= 0) or t[0] <= 0:
        raise DomainError("times must be positive and increasing")
    q = q_exponent(lam, a)
    if lam == 0:
        ones = np.ones((replicas, len(t)))
        return _moment_summary(t, ones, ones, q=0.0, stopped=0)
    smax = -math.log(jmin) / (a * lam) if lam > 0 else np.inf

    def block(gen, n):
        return _boundary_kernel(gen, n, a, x, t, ds, smax)

    parts = run_blocks(rng, replicas, block, workers)
    S = np.concatenate([p[0] for p in parts])
    L = np.concatenate([p[1] for p in parts])
    stopped = int(np.sum(~np.isfinite(S[:, -1])))
    J = np.exp(-a * lam * S)
    M = np.where(np.isfinite(S), np.exp(q * L) * J, 0.0)
    return _moment_summary(t, J, M, q=q, stopped=stopped)


def boundary_moment_exact(lam: float, a: float, t, x: float = 1.0) -> np.ndarray:
    """``E[g'_t(x)^lam]`` in closed form.

    Weighting by the martingale ``X^q g'^lam`` turns ``X`` into a Bessel
    process of dimension ``2(a+q)+1``, so the moment equals
    ``x^q E[X_t^{-q}]`` under that law, a noncentral chi-square moment.
    """
    q = q_exponent(lam, a)
    t = np.asarray(t, dtype=float)
    k = 2 * (a + q) + 1
    nc = x * x / t
    p = q / 2
    # E[chi2_k(nc)^(-p)] = 2^-p G(k/2-p)/G(k/2) 1F1(p; k/2; -nc/2) after Kummer's transformation
    mom = 2.0 ** (-p) * special.gamma(k / 2 - p) / special.gamma(k / 2) \
        * special.hyp1f1(p, k / 2, -nc / 2)
    return x ** q * t ** (-p) * mom


def boundary_moment_girsanov(lam: float, a: float, t: float, x: float = 1.0,
                             replicas: int = 10000, rng=None) -> Estimate:
    """Importance-sampling estimate of ``E[g'_t(x)^lam]``.

    Samples ``X_t`` from the tilted Bessel law (exactly, via its squared
    process) and averages the weight ``x^q X_t^{-q}``.
    """
    q = q_exponent(lam, a)
    k = 2 * (a + q) + 1
    gen = as_stream(rng).generator(0)
    sq = t * gen.noncentral_chisquare(k, x * x / t, size=replicas)
    return mean_estimate(x ** q * sq ** (-q / 2), q=q)


# ---------------------------------------------------------------------------
# two-point boundary moments


@nb.njit(nogil=True, cache=True)
def _two_point_kernel(gen, n, a, x, y, tgrid, h):
    """Co-evolve ``X = g(x) - U`` and ``X~ = U - g(y)`` driven by the same ``B``.

    Returns ``int dt/X^2``, ``int dt/X~^2``, ``X`` and ``X~`` at the grid times.
    """
    nt = len(tgrid)
    I1 = np.zeros((n, nt))
    I2 = np.zeros((n, nt))
    XX = np.zeros((n, nt))
    YY = np.zeros((n, nt))
    for i in range(n):
        lx = math.log(x)
        ly = math.log(-y)
        t = 0.0
        i1 = 0.0
        i2 = 0.0
        k = 0
        while k < nt:
            X = math.exp(lx)
            Y = math.exp(ly)
            m = min(X, Y)
            dt = h * m * m
            db = math.sqrt(dt) * gen.standard_normal()
            lx_new = lx + (a - 0.5) / (X * X) * dt + db / X
            ly_new = ly + (a - 0.5) / (Y * Y) * dt - db / Y
            X2 = math.exp(lx_new)
            Y2 = math.exp(ly_new)
            d1 = 0.5 * (1 / (X * X) + 1 / (X2 * X2)) * dt
            d2 = 0.5 * (1 / (Y * Y) + 1 / (Y2 * Y2)) * dt
            t_new = t + dt
            while k < nt and tgrid[k] <= t_new:
                f = (tgrid[k] - t) / dt
                I1[i, k] = i1 + f * d1
                I2[i, k] = i2 + f * d2
                XX[i, k] = math.exp(lx + f * (lx_new - lx))
                YY[i, k] = math.exp(ly + f * (ly_new - ly))
                k += 1
            lx, ly, t, i1, i2 = lx_new, ly_new, t_new, i1 + d1, i2 + d2
    return I1, I2, XX, YY


def two_sided_moment(lam1: float, lam2: float, a: float, x: float, y: float,
                     times: Sequence[float], replicas: int = 10000, rng=None,
                     h: float = 1e-3, workers: int = 1) -> MomentResult:
    """Estimate ``E[g'_t(x)^lam1 g'_t(y)^lam2]`` for ``y < 0 < x``.

    Also reports the martingale ``X^q X~^q~ (X + X~)^r g'(x)^lam1 g'(y)^lam2``
    with ``r = q q~ / a``. Requires ``a >= 1/2`` so neither point is swallowed.
    """
    if not y < 0 < x:
        raise DomainError("need y < 0 < x")
    if a < 0.5:
        raise DomainError("two_sided_moment needs a >= 1/2 (no swallowing)")
    t = np.asarray(times, dtype=float)
    q1, q2 = q_exponent(lam1, a), q_exponent(lam2, a)
    r = q1 * q2 / a
    parts = run_blocks(rng, replicas, lambda g, n: _two_point_kernel(g, n, a, x, y, t, h), workers)
    I1, I2, XX, YY = (np.concatenate([p[j] for p in parts]) for j in range(4))
    J = np.exp(-a * lam1 * I1 - a * lam2 * I2)
    M = XX ** q1 * YY ** q2 * (XX + YY) ** r * J
    return _moment_summary(t, J, M, q=q1 + q2 + q1 * q2 / a,
                           martingale_start=x ** q1 * (-y) ** q2 * (x - y) ** r)


# ---------------------------------------------------------------------------
# angular diffusions dTheta = mu cot(Theta) dt + dW


@nb.njit(nogil=True, cache=True)
def _cot_grid_kernel(gen, n, mu, w0, dtau, tgrid, taumax):
    """Values of ``w`` and of ``tau = int dt/sin^2`` at the grid times."""
    nt = len(tgrid)
    W = np.zeros((n, nt))
    T = np.full((n, nt), np.inf)
    drift = 0.5 - mu
    sd = math.sqrt(dtau)
    for i in range(n):
        w = w0
        tau = 0.0
        t = 0.0
        k = 0
        while k < nt and tau < taumax:
            w_new = w + drift * math.tanh(w) * dtau + sd * gen.standard_normal()
            c0 = 1.0 / math.cosh(w)
            c1 = 1.0 / math.cosh(w_new)
            t_new = t + 0.5 * (c0 * c0 + c1 * c1) * dtau
            while k < nt and tgrid[k] <= t_new:
                f = (tgrid[k] - t) / (t_new - t) if t_new > t else 1.0
                W[i, k] = w + f * (w_new - w)
                T[i, k] = tau + f * dtau
                k += 1
            w, tau, t = w_new, tau + dtau, t_new
    return W, T


@nb.njit(nogil=True, cache=True)
def _cot_lifetime_kernel(gen, n, mu, w0, dtau, wmax, tmax):
    """Lifetime ``int sech^2(w) dtau`` until ``|w| > wmax``, capped at ``tmax``."""
    out = np.empty(n)
    drift = 0.5 - mu
    sd = math.sqrt(dtau)
    for i in range(n):
        w = w0
        t = 0.0
        while abs(w) < wmax and t < tmax:
            w_new = w + drift * math.tanh(w) * dtau + sd * gen.standard_normal()
            c0 = 1.0 / math.cosh(w)
            c1 = 1.0 / math.cosh(w_new)
            t += 0.5 * (c0 * c0 + c1 * c1) * dtau
            w = w_new
        out[i] = t
    return out


def theta_to_w(theta):
    return np.log(np.tan(np.asarray(theta) / 2))


def w_to_theta(w):
    return 2 * np.arctan(np.exp(np.asarray(w)))


def cot_diffusion_samples(mu: float, theta0: float, t: float, replicas: int, rng=None,
                          dtau: float = 1e-3, workers: int = 1) -> np.ndarray:
    """Samples of ``Theta_t`` for ``dTheta = mu cot(Theta) dt + dW`` (``mu >= 1/2``)."""
    if mu < 0.5:
        raise DomainError("cot_diffusion_samples needs mu >= 1/2 (no absorption)")
    if not 0 < theta0 < math.pi:
        raise DomainError("theta0 must lie in (0, pi)")
    grid = np.array([float(t)])
    parts = run_blocks(rng, replicas,
                       lambda g, n: _cot_grid_kernel(g, n, mu, float(theta_to_w(theta0)), dtau, grid, np.inf)[0],
                       workers)
    return w_to_theta(concat_blocks(parts)[:, 0])


def radial_moment(lam: float, a: float, theta: float, times: Sequence[float],
                  replicas: int = 10000, rng=None, dtau: float = 1e-3,
                  jmin: float = 1e-8, workers: int = 1) -> MomentResult:
    """Estimate ``E[|g'_t|^lam] = E[exp(-a lam int dt/sin^2 Psi)]`` for ``dPsi = a cot Psi dt + dW``.

    ``slope`` is the fitted decay rate of ``log E`` in ``t``; the exponent
    ``beta`` in ``E ~ exp(-2 a beta t)`` is ``-slope/(2a)`` (``extra["beta"]``).
    The martingale ``exp(k t) sin^r Psi J^lam`` uses ``r = q(lam)`` and
    ``k = a lam + r/2``.
    """
    if a < 0.25:
        raise DomainError("radial_moment needs a >= 1/4")
    if a < 0.5:
        raise DomainError("the angular diffusion is absorbed for a < 1/2; not supported")
    if not 0 < theta < math.pi:
        raise DomainError("theta must lie in (0, pi)")
    t = np.asarray(times, dtype=float)
    r = q_exponent(lam, a)
    k = a * lam + r / 2
    taumax = -math.log(jmin) / (a * lam) if lam > 0 else np.inf
    w0 = float(theta_to_w(theta))
    parts = run_blocks(rng, replicas, lambda g, n: _cot_grid_kernel(g, n, a, w0, dtau, t, taumax), workers)
    W = np.concatenate([p[0] for p in parts])
    T = np.concatenate([p[1] for p in parts])
    J = np.exp(-a * lam * T)
    sin_psi = 1 / np.cosh(W)
    M = np.where(np.isfinite(T), np.exp(k * t) * sin_psi ** r * J, 0.0)
    res = _moment_summary(t, J, M, log_time=False, q=r, k=k,
                          stopped=int(np.sum(~np.isfinite(T[:, -1]))),
                          martingale_start=math.sin(theta) ** r)
    res.extra["beta"] = -res.slope / (2 * a)
    res.extra["beta_stderr"] = res.slope_stderr / (2 * a)
    return res


def stationary_theta_check(a: float, t: float = 20.0, replicas: int = 20000, rng=None,
                           bins: int = 20, dtau: float = 1e-3) -> dict:
    """Chi-square test of ``dTheta = 2a cot Theta dt + dW`` against density ``sin^{4a}``."""
    samples = cot_diffusion_samples(2 * a, math.pi / 2, t, replicas, rng, dtau)
    edges = np.linspace(0, math.pi, bins + 1)
    counts, _ = np.histogram(samples, edges)
    dens = lambda th: np.sin(th) ** (4 * a)
    norm = special.beta(0.5, 2 * a + 0.5)
    from scipy import integrate
    probs = np.array([integrate.quad(dens, lo, hi)[0] for lo, hi in zip(edges[:-1], edges[1:])]) / norm
    expected = probs * replicas
    keep = expected >= 5
    chi2 = float(np.sum((counts[keep] - expected[keep]) ** 2 / expected[keep]))
    dof = int(keep.sum()) - 1
    return {"chi2": chi2, "dof": dof, "p_value": float(stats.chi2.sf(chi2, dof)), "samples": samples}


@nb.njit(nogil=True, cache=True)
def _two_sided_chordal_kernel(gen, n, a, z0, sigma_end, h):
    """Theta at Upsilon-clock time ``sigma_end`` for chordal SLE weighted by ``G``.

    Steps the Loewner flow in capacity time with step ``h |Z|^2``; the
    clock is ``dsigma = Y^2/|Z|^4 dt``.
    """
    out = np.empty(n)
    coef = 4 * a - 1
    for i in range(n):
        z = z0
        sig = 0.0
        while True:
            r2 = z.real * z.real + z.imag * z.imag
            dt = h * r2
            dsig = z.imag * z.imag / (r2 * r2) * dt
            if sig + dsig >= sigma_end:
                out[i] = math.atan2(z.imag, z.real)
                break
            du = coef * z.real / r2 * dt - math.sqrt(dt) * gen.standard_normal()
            zz = z * np.sqrt(1.0 + 2 * a * dt / (z * z))
            z = zz - du
            if z.imag < 0:
                z = complex(z.real, -z.imag)
            sig += dsig
    return out


def two_sided_theta_samples(a: float, z: complex, sigma: float, replicas: int, rng=None,
                            route: str = "chordal", h: float = 1e-3, dtau: float = 1e-3) -> np.ndarray:
    """``arg Z`` at Upsilon-clock time ``sigma`` under two-sided radial SLE.

    ``route="chordal"`` steps the weighted chordal Loewner flow;
    ``route="radial"`` simulates ``dTheta = 2a cot Theta dt + dW`` directly.
    """
    z = complex(z)
    if not z.imag > 0:
        raise DomainError("z must lie in the upper half-plane")
    if route == "chordal":
        parts = run_blocks(rng, replicas, lambda g, n: _two_sided_chordal_kernel(g, n, a, z, sigma, h))
        return concat_blocks(parts)
    if route == "radial":
        theta0 = math.atan2(z.imag, z.real)
        return cot_diffusion_samples(2 * a, theta0, sigma, replicas, rng, dtau)
    raise DomainError(f"unknown route {route!r}")


# ---------------------------------------------------------------------------
# Cardy hitting order


@nb.njit(nogil=True, cache=True)
def _cardy_kernel(gen, n, a, w0, dt, wmax, max_steps):
    """1 if point 1 is swallowed first (``w -> -inf``), 0 otherwise, -1 if censored."""
    out = np.empty(n, np.int8)
    mu = 0.5 - a
    for i in range(n):
        w = w0
        steps = 0
        while abs(w) < wmax and steps < max_steps:
            c = math.cosh(0.5 * w)
            dr = min(dt * 16.0 * c * c * c * c, 0.25)
            w += mu * math.tanh(0.5 * w) * dr + math.sqrt(dr) * gen.standard_normal()
            steps += 1
        if abs(w) < wmax:
            out[i] = -1
        else:
            out[i] = 1 if w < 0 else 0
    return out


def cardy_hitting_mc(kappa: float, y: float, replicas: int, rng=None, dt: float = 1e-4,
                     wmax: float = 40.0, max_steps: int = 10 ** 7, workers: int = 1) -> Estimate:
    """Estimate ``P(T_{-y} > T_1)`` for chordal SLE with ``kappa > 4``.

    With ``X = g_t(1) - U_t > 0`` and ``X~ = g_t(-y) - U_t < 0`` the ratio
    ``Z = X/(X - X~)`` starts at ``1/(1+y)`` and ``w = log(Z/(1-Z))``
    solves ``dw = (1/2 - a) tanh(w/2) dr + dW_r`` in the clock
    ``dr = dt/(X - X~)^2 / (Z(1-Z))^2``. Point 1 is swallowed first iff
    ``w -> -inf``. Each Euler step covers capacity time
    ``dt (X - X~)^2``, i.e. ``dt`` in scale-free units, so the boundary
    layer near swallowing is resolved.
    """
    kappa = _check_kappa(kappa)
    if kappa <= 4:
        raise DomainError("cardy_hitting_mc needs kappa > 4 (points are never swallowed otherwise)")
    if not y > 0:
        raise DomainError("y must be positive")
    a = 2 / kappa
    w0 = -math.log(y)
    parts = run_blocks(rng, replicas, lambda g, n: _cardy_kernel(g, n, a, w0, dt, wmax, max_steps), workers)
    res = concat_blocks(parts)
    censored = int(np.sum(res < 0))
    if censored:
        more = _cardy_kernel(as_stream(rng).child(1).generator(0), censored, a, w0, dt, wmax, 100 * max_steps)
        res = np.concatenate([res[res >= 0], more])
    return proportion_estimate(res == 1, censored=censored, y=y, kappa=kappa)


# ---------------------------------------------------------------------------
# Green's function tail


@dataclass
class GreenTailResult:
    deltas: np.ndarray
    prob: np.ndarray
    stderr: np.ndarray
    exponent: float
    exponent_stderr: float
    censored: int
    replicas: int


def green_tail_mc(kappa: float, z: complex, deltas: Sequence[float], replicas: int, rng=None,
                  dtau: float = 1e-3, wmax: float = 10.0, workers: int = 1) -> GreenTailResult:
    """Tail ``P(Upsilon_inf(z) <= delta)`` for chordal SLE with ``kappa < 8``.

    In the clock ``dsigma = Y^2/|Z|^4 dt`` one has
    ``log Upsilon = log Im z - 2 a sigma`` and ``Theta = arg Z`` solves
    ``dTheta = (1 - 2a) cot Theta dsigma + dW``, which is absorbed at
    ``{0, pi}`` at the finite time ``sigma_inf``. Hence
    ``P(Upsilon_inf <= delta) = P(sigma_inf >= log(Im z/delta)/(2a))``.
    """
    kappa = _check_kappa(kappa)
    if kappa >= 8:
        raise DomainError("green_tail_mc needs kappa < 8")
    z = complex(z)
    if not z.imag > 0:
        raise DomainError("z must lie in the upper half-plane")
    a = 2 / kappa
    d = np.asarray(deltas, dtype=float)
    if np.any(d <= 0):
        raise DomainError("deltas must be positive")
    need = np.maximum(np.log(z.imag / d), 0.0) / (2 * a)
    tmax = float(need.max()) + 1.0
    w0 = float(theta_to_w(math.atan2(z.imag, z.real)))
    parts = run_blocks(rng, replicas,
                       lambda g, n: _cot_lifetime_kernel(g, n, 1 - 2 * a, w0, dtau, wmax, tmax), workers)
    life = concat_blocks(parts)
    hits = life[:, None] >= need[None, :]
    p = hits.mean(axis=0)
    se = np.sqrt(np.maximum(p * (1 - p), 0) / len(life))
    small = (d < z.imag) & (p > 0)
    if small.sum() >= 2:
        fit = log_fit(d[small], p[small], se[small])
        expo, expo_se = fit.slope, fit.slope_stderr
    else:
        expo, expo_se = float("nan"), float("nan")
    return GreenTailResult(d, p, se, expo, expo_se, int(np.sum(life >= tmax)), len(life))


# ---------------------------------------------------------------------------
# restriction


@nb.njit(nogil=True, cache=True)
def _sqrt_step(z, c):
    # z sqrt(1 + c/z^2) on the principal branch: the cut is the vertical slit
    if z == 0:
        return complex(0.0, math.sqrt(c))
    return z * np.sqrt(1.0 + c / (z * z))


@nb.njit(nogil=True, cache=True)
def _seg_dist(p, q, u):
    d = q - p
    L2 = d.real * d.real + d.imag * d.imag
    if L2 == 0:
        return abs(p - u)
    f = ((u - p).real * d.real + (u - p).imag * d.imag) / L2
    f = min(1.0, max(0.0, f))
    return abs(p + f * d - u)


@nb.njit(nogil=True, cache=True)
def _restriction_kernel(gen, n, a, x0, r, m0, mmax, eps, tol, hit_rel, max_steps):
    """Per replica: 1 avoided, 0 hit, -1 censored; also the number of steps.

    Chordal SLE is discretized by vertical-slit steps of capacity
    ``eps * dist(U, g_t(arc))^2``. The arc of the half-disk is kept as a
    polyline of tracked image points that is refined near ``U``; new arc
    points are pushed through all previous steps.
    """
    out = np.empty(n, np.int8)
    nsteps = np.empty(n, np.int64)
    npts = np.empty(n, np.int64)
    hs = np.empty(max_steps)
    vs = np.empty(max_steps)
    phi = np.empty(mmax)
    Z = np.empty(mmax, np.complex128)
    for i in range(n):
        m = m0
        for j in range(m):
            phi[j] = math.pi * (1.0 - j / (m - 1))
            Z[j] = x0 + r * complex(math.cos(phi[j]), math.sin(phi[j]))
        U = 0.0
        k = 0
        status = -1
        while k < max_steps:
            # refine segments that are long compared with their distance to U
            j = 0
            while j < m - 1:
                seglen = abs(Z[j + 1] - Z[j])
                near = min(abs(Z[j] - U), abs(Z[j + 1] - U))
                if seglen > 0.5 * near and m < mmax and abs(phi[j + 1] - phi[j]) > 1e-12:
                    pm = 0.5 * (phi[j] + phi[j + 1])
                    g = x0 + r * complex(math.cos(pm), math.sin(pm))
                    for s in range(k):
                        g = vs[s] + _sqrt_step(g - vs[s], 2 * a * hs[s])
                    for s in range(m, j + 1, -1):
                        phi[s] = phi[s - 1]
                        Z[s] = Z[s - 1]
                    phi[j + 1] = pm
                    Z[j + 1] = g
                    m += 1
                else:
                    j += 1
            dmin = 1e300
            for j in range(m - 1):
                dd = _seg_dist(Z[j], Z[j + 1], U)
                if dd < dmin:
                    dmin = dd
            c = 0.5 * (Z[0].real + Z[m - 1].real)
            R = 0.0
            for j in range(m):
                R = max(R, abs(Z[j] - c))
            R *= 1.02
            if dmin < hit_rel * R:
                status = 0
                break
            D = abs(U - c)
            if D > R:
                ratio = R * R / (D * D)
                if 1.0 - (1.0 - ratio) ** 0.625 < tol:
                    status = 1
                    break
            h = eps * dmin * dmin
            c2 = 2 * a * h
            for j in range(m):
                Z[j] = U + _sqrt_step(Z[j] - U, c2)
            hs[k] = h
            vs[k] = U
            k += 1
            U -= math.sqrt(h) * gen.standard_normal()
        out[i] = status
        nsteps[i] = k
        npts[i] = m
    return out, nsteps, npts


def restriction_mc(hull: HullSpec, replicas: int, rng=None, kappa: float = 8 / 3,
                   eps: float = 3e-3, tol: float = 2.5e-4, hit_rel: float = 1e-2,
                   arc_points: int = 64, max_points: int = 4096, max_steps: int = 200000,
                   workers: int = 1) -> Estimate:
    """Fraction of chordal SLE traces that avoid a half-disk hull.

    A trace counts as hitting once the driving value is within
    ``hit_rel`` (relative to the image hull size) of the image of the arc.
    Traces are stopped as avoiding once the chance that the remainder of
    the curve hits a half-disk containing the image hull, computed from the
    half-disk removal map, falls below ``tol``; this truncation can only
    overstate avoidance, by at most ``tol``.
    """
    kappa = _check_kappa(kappa)
    if hull.kind != "halfdisk":
        raise DomainError("restriction_mc supports half-disk hulls")
    if hull.x0 - hull.size <= 0 <= hull.x0 + hull.size:
        raise DomainError("hull must be at positive distance from 0")
    a = 2 / kappa
    parts = run_blocks(rng, replicas,
                       lambda g, n: _restriction_kernel(g, n, a, hull.x0, hull.size, arc_points,
                                                        max_points, eps, tol, hit_rel, max_steps),
                       workers)
    status = np.concatenate([p[0] for p in parts])
    steps = np.concatenate([p[1] for p in parts])
    ok = status >= 0
    return proportion_estimate(status[ok] == 1, censored=int(np.sum(~ok)),
                               mean_steps=float(steps.mean()), tol=tol)
