"""The fifteen acceptance criteria, each runnable on its own.

Every criterion returns a :class:`CriterionResult`; the CLI ``accept`` verb
and ``tests/test_acceptance.py`` both call :func:`run_criterion`.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from . import brownian_measures as bm
from . import discrete_models as dm
from . import loewner_engine as le
from . import params_exponents as pe
from . import sle_drivers as sd
from .conformal_core import HullSpec, parse_hull
from .errors import ConfigError
from .rng import RngStream

BASE_SEED = 20240601


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    summary: str
    details: dict = field(default_factory=dict)
    seconds: float = 0.0
    known_unattainable: bool = False

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        note = " (known unattainable)" if self.known_unattainable and not self.passed else ""
        return f"[{tag}] {self.number:2d} {self.name}: {self.summary}{note} ({self.seconds:.1f}s)"

    def as_dict(self) -> dict:
        return {"number": self.number, "name": self.name, "passed": self.passed,
                "summary": self.summary, "details": self.details, "seconds": self.seconds,
                "known_unattainable": self.known_unattainable}


def _rng(number: int, sub: int = 0) -> RngStream:
    return RngStream(BASE_SEED + number, sub)


# rows copied from the reference table of discrete models: kappa, a, b, btilde, c, d
TABLE_ROWS = {
    "loop-erased random walk": (2, 1, 1, 0, -2, Fraction(5, 4)),
    "self-avoiding walk": (Fraction(8, 3), Fraction(3, 4), Fraction(5, 8), Fraction(5, 48), 0, Fraction(4, 3)),
    "Ising interface": (3, Fraction(2, 3), Fraction(1, 2), Fraction(1, 8), Fraction(1, 2), Fraction(11, 8)),
    "harmonic explorer / free field": (4, Fraction(1, 2), Fraction(1, 4), Fraction(1, 8), 1, Fraction(3, 2)),
    "percolation interface": (6, Fraction(1, 3), 0, 0, 0, Fraction(7, 4)),
    "uniform spanning tree": (8, Fraction(1, 4), Fraction(-1, 8), Fraction(-3, 16), -2, 2),
}


def c01_table(workers: int = 1) -> CriterionResult:
    bad = []
    for name, (k, a, b, bt, c, d) in TABLE_ROWS.items():
        p = pe.derive_params(Fraction(k))
        got = (p.kappa, p.a, p.b, p.btilde, p.c_central, p.d_dim)
        want = tuple(Fraction(v) for v in (k, a, b, bt, c, d))
        if got != want or not all(isinstance(v, Fraction) for v in got):
            bad.append(name)
    rows = {r.model for r in pe.model_table()}
    missing = sorted(set(TABLE_ROWS) - rows)
    ok = not bad and not missing
    return CriterionResult(1, "table fidelity", ok,
                           f"{len(TABLE_ROWS) - len(bad)}/{len(TABLE_ROWS)} rows exact",
                           {"mismatched": bad, "missing": missing})


def c02_exponent_algebra(workers: int = 1, checks: int = 1000) -> CriterionResult:
    gen = _rng(2).generator(0)
    worst = 0.0
    for _ in range(checks):
        a = gen.uniform(0.26, 2.0)
        l0 = pe.lambda0(a)
        l1, l2, l3 = l0 + gen.exponential(1.5, size=3)
        q1, q2 = pe.q_exponent(l1, a), pe.q_exponent(l2, a)
        # below the branch point the sum is the other root of the quadratic
        branch = "plus" if q1 + q2 >= (1 - 2 * a) / 2 else "minus"
        root = abs(q1 + q2 - pe.q_exponent(l1 + l2 + q1 * q2 / a, a, branch))
        sym = abs(pe.chordal_crossing_exponent([l1, l2], a) - pe.chordal_crossing_exponent([l2, l1], a))
        # the nested form needs q(q^{-1}(y)) = y, true for nonnegative exponents
        m1, m2, m3 = l1 - l0, l2 - l0, l3 - l0
        casc = abs(pe.chordal_crossing_exponent([m1, m2, m3], a)
                   - pe.chordal_crossing_exponent([pe.chordal_crossing_exponent([m1, m2], a), m3], a))
        casc /= max(1.0, m1 + m2 + m3)
        b = pe.b_of_a(a)
        qb = abs(pe.q_exponent(b, a) - a)
        n = int(gen.integers(1, 11))
        xi = abs(pe.chordal_crossing_exponent([b] * n, a) - pe.chordal_crossing_closed_form(n, a))
        scale = max(1.0, abs(pe.chordal_crossing_closed_form(n, a)))
        worst = max(worst, root, sym, casc, qb, xi / scale)
    ok = worst <= 1e-10
    return CriterionResult(2, "exponent algebra", ok, f"{checks} checks, max error {worst:.2e}",
                           {"max_error": worst, "checks": checks})


def c03_cardy(workers: int = 1, replicas: int = 100_000, dt: float = 1e-4) -> CriterionResult:
    rows = []
    ok = True
    for i, y in enumerate((0.5, 1.0, 2.0)):
        est = sd.cardy_hitting_mc(6.0, y, replicas, _rng(3, i), dt=dt, workers=workers)
        exact = pe.cardy_phi(y, 1 / 3)
        good = abs(est.estimate - exact) <= 3 * est.stderr
        ok &= good
        rows.append({"y": y, "estimate": est.estimate, "stderr": est.stderr, "exact": exact, "pass": good})
    summ = ", ".join(f"y={r['y']}: {r['estimate']:.4f}+-{r['stderr']:.4f} vs {r['exact']:.4f}" for r in rows)
    return CriterionResult(3, "cardy formula", ok, summ, {"rows": rows})


def c04_percolation(workers: int = 1, replicas: int = 20_000, n: int = 256) -> CriterionResult:
    xs = (0.25, 0.5, 0.75)
    res = dm.triangle_crossing_mc(list(xs), n, replicas, _rng(4), workers=workers)
    rows = []
    ok = True
    for r in res:
        good = all(abs(e.estimate - r.x) <= 3 * e.stderr + 0.02 for e in (r.floor, r.ceil))
        ok &= good
        rows.append({"x": r.x, "floor": r.floor.estimate, "ceil": r.ceil.estimate,
                     "stderr": r.floor.stderr, "pass": good})
    summ = ", ".join(f"x={r['x']}: {r['floor']:.4f}" for r in rows)
    return CriterionResult(4, "percolation triangle", ok, summ, {"rows": rows, "n": n})


def c05_bessel(workers: int = 1, replicas: int = 10_000, horizon: float = 1e4) -> CriterionResult:
    rows = []
    ok = True
    for i, (a, want) in enumerate(((1 / 3, "ge"), (0.5, "le"), (1.0, "le"))):
        est = sd.bessel_hit_probability(a, 1.0, horizon, replicas, _rng(5, i), workers=workers)
        good = est.estimate >= 0.99 if want == "ge" else est.estimate <= 0.01
        ok &= good
        rows.append({"a": a, "estimate": est.estimate, "stderr": est.stderr,
                     "exact": sd.bessel_hit_probability_exact(a, 1.0, horizon), "pass": good})
    summ = ", ".join(f"a={r['a']:.3g}: {r['estimate']:.4f} (exact {r['exact']:.4f})" for r in rows)
    return CriterionResult(5, "bessel phases", ok, summ, {"rows": rows}, known_unattainable=True)


def c06_boundary_moment(workers: int = 1, replicas: int = 40_000) -> CriterionResult:
    a = 0.75
    times = np.geomspace(10, 1000, 9)
    rows = []
    ok = True
    for i, lam in enumerate((1.0, 2.0)):
        res = sd.boundary_moment(lam, a, times, 1.0, replicas, _rng(6, i), workers=workers)
        target = -pe.q_exponent(lam, a) / 2
        slope_ok = abs(res.slope - target) <= 0.05
        dev = np.abs(res.martingale - 1.0) / res.martingale_stderr
        mart_ok = bool(np.all(dev <= 3))
        ok &= slope_ok and mart_ok
        rows.append({"lam": lam, "slope": res.slope, "target": target,
                     "martingale_max_sigma": float(dev.max()), "pass": slope_ok and mart_ok})
    summ = ", ".join(f"lam={r['lam']:g}: slope {r['slope']:.4f} vs {r['target']:.4f}, "
                     f"martingale {r['martingale_max_sigma']:.2f} sigma" for r in rows)
    return CriterionResult(6, "boundary moment slope", ok, summ, {"rows": rows})


def c07_radial_moment(workers: int = 1, replicas: int = 40_000) -> CriterionResult:
    a, lam = 0.75, 0.625
    times = np.linspace(1.0, 5.0, 9)
    res = sd.radial_moment(lam, a, math.pi / 2, times, replicas, _rng(7), workers=workers)
    beta = res.extra["beta"]
    ok = abs(beta - 9 / 16) <= 0.05
    return CriterionResult(7, "radial moment", ok, f"beta {beta:.4f}+-{res.extra['beta_stderr']:.4f} vs 0.5625",
                           {"beta": beta, "beta_stderr": res.extra["beta_stderr"],
                            "closed_form": pe.radial_beta(lam, a)})


def c08_restriction(workers: int = 1, replicas: int = 10_000) -> CriterionResult:
    hull = parse_hull("halfdisk:2,0.5")
    est = sd.restriction_mc(hull, replicas, _rng(8), workers=workers)
    exact = (15 / 16) ** 0.625
    ok = abs(est.estimate - exact) <= 3 * est.stderr
    return CriterionResult(8, "restriction", ok, f"{est.estimate:.4f}+-{est.stderr:.4f} vs {exact:.5f}",
                           {"estimate": est.estimate, "stderr": est.stderr, "exact": exact,
                            **{k: v for k, v in est.extra.items()}})


def c09_locality(workers: int = 1) -> CriterionResult:
    hull = parse_hull("halfdisk:2,0.5")
    seed = BASE_SEED + 9
    sub = sd.subdomain_driver(6.0, hull, 1e-3, 5000, rng=seed)
    full = sd.sample_chordal_driver(6.0, 1e-3, 5000, rng=seed)
    n = len(sub.path.values)
    same = n > 1 and np.array_equal(sub.path.values, full.values[:n])
    return CriterionResult(9, "locality", bool(same), f"{n} driving values identical" if same else "paths differ",
                           {"compared": n, "truncated_at": sub.truncated_at})


def c10_green_tail(workers: int = 1, replicas: int = 20_000) -> CriterionResult:
    deltas = (0.2, 0.1, 0.05, 0.025)
    at_i = sd.green_tail_mc(8 / 3, 1j, deltas, replicas, _rng(10, 0), workers=workers)
    at_1i = sd.green_tail_mc(8 / 3, 1 + 1j, deltas, replicas, _rng(10, 1), workers=workers)
    target = 2 - pe.derive_params(8 / 3).d_dim
    exp_ok = abs(at_i.exponent - target) <= 0.1 * target
    p1, p2 = at_i.prob[-1], at_1i.prob[-1]
    s1, s2 = at_i.stderr[-1], at_1i.stderr[-1]
    ratio = p1 / p2
    ratio_se = ratio * math.hypot(s1 / p1, s2 / p2)
    g_ratio = pe.green_function(1j, 0.75) / pe.green_function(1 + 1j, 0.75)
    ratio_ok = abs(ratio - g_ratio) <= 3 * ratio_se
    return CriterionResult(10, "green tail", exp_ok and ratio_ok,
                           f"exponent {at_i.exponent:.4f} vs {target:.4f}, ratio {ratio:.3f}+-{ratio_se:.3f} vs {g_ratio:.3f}",
                           {"exponent": at_i.exponent, "exponent_stderr": at_i.exponent_stderr,
                            "prob_i": at_i.prob.tolist(), "prob_1i": at_1i.prob.tolist(),
                            "ratio": ratio, "ratio_stderr": ratio_se})


def c11_bubble(workers: int = 1, replicas: int = 100_000) -> CriterionResult:
    rows = []
    ok = True
    for i, ratio in enumerate((2, 4, 8)):
        hull = HullSpec("halfdisk", ratio * 0.5, 0.5)
        est = bm.bubble_gamma_integral(hull, replicas, _rng(11, i))
        exact = bm.bubble_schwarzian(hull)
        good = abs(est.estimate - exact) <= 3 * est.stderr
        ok &= good
        rows.append({"x0_over_r": ratio, "estimate": est.estimate, "stderr": est.stderr,
                     "schwarzian": exact, "pass": good})
    summ = ", ".join(f"{r['x0_over_r']}: {r['estimate']:.5g} vs {r['schwarzian']:.5g}" for r in rows)
    return CriterionResult(11, "bubble identity", ok, summ, {"rows": rows})


HCAP_HULLS = ("halfdisk:0,1", "halfdisk:3,0.5", "slit:0,1", "slit:2,0.5", "tilt:0,1,1.0")


def c12_hcap(workers: int = 1, replicas: int = 200_000) -> CriterionResult:
    rows = []
    ok = abs(parse_hull("halfdisk:0,1").hcap - 1.0) == 0.0
    for i, hull_text in enumerate(HCAP_HULLS):
        hull = parse_hull(hull_text)
        est = bm.hcap_mc(hull, replicas, _rng(12, i))
        exact = hull.hcap
        good = abs(est.estimate - exact) <= 3 * est.stderr + 1e-12
        ok &= good
        rows.append({"hull": hull_text, "estimate": est.estimate, "stderr": est.stderr, "exact": exact, "pass": good})
    summ = ", ".join(f"{r['hull']}: {r['estimate']:.4f} vs {r['exact']:.4f}" for r in rows)
    return CriterionResult(12, "hcap cross-validation", bool(ok), summ, {"rows": rows})


def c13_beurling(workers: int = 1, replicas: int = 100_000) -> CriterionResult:
    eps = [2.0 ** -k for k in range(2, 8)]
    res = bm.beurling_mc(eps, replicas, _rng(13), workers=workers)
    ok = abs(res.exponent - 0.5) <= 0.05
    return CriterionResult(13, "beurling exponent", ok, f"exponent {res.exponent:.4f}+-{res.exponent_stderr:.4f}",
                           {"exponent": res.exponent, "prob": res.prob.tolist(), "exact": res.exact.tolist()})


def _saw_oracle(n: int) -> int:
    """Plain recursive count used only as an independent check."""
    def rec(x, y, left, seen):
        if left == 0:
            return 1
        total = 0
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            p = (x + dx, y + dy)
            if p not in seen:
                seen.add(p)
                total += rec(p[0], p[1], left - 1, seen)
                seen.remove(p)
        return total
    return rec(0, 0, n, {(0, 0)})


def c14_discrete(workers: int = 1, walks: int = 10_000) -> CriterionResult:
    counts = dm.saw_counts(10)
    saw_ok = all(counts[n] == _saw_oracle(n) for n in range(11))
    gen = _rng(14).generator(0)
    steps = np.array([(1, 0), (-1, 0), (0, 1), (0, -1)])
    le_ok = True
    for _ in range(walks):
        m = int(gen.integers(0, 200))
        pts = np.vstack([[0, 0], np.cumsum(steps[gen.integers(0, 4, m)], axis=0)]) if m else np.zeros((1, 2), int)
        e = dm.loop_erase(dm.WalkPath(pts))
        ee = dm.loop_erase(e)
        le_ok &= (e.is_self_avoiding() and np.array_equal(ee.points, e.points)
                  and tuple(e.points[0]) == tuple(pts[0]) and tuple(e.points[-1]) == tuple(pts[-1]))
        if not le_ok:
            break
    ok = saw_ok and le_ok
    return CriterionResult(14, "discrete checks", bool(ok),
                           f"J_0..J_10 {'match' if saw_ok else 'differ'}, loop erasure {'ok' if le_ok else 'broken'} on {walks} walks",
                           {"counts": counts})


def c15_engine(workers: int = 1) -> CriterionResult:
    dt, steps = 1e-4, 2000
    zs = np.array([1j, 2j, 1 + 1j, -1 + 0.5j, 3 + 0.1j, -2 + 2j])
    worst = 0.0
    for i, kappa in enumerate((2.0, 4.0, 6.0)):
        path = sd.sample_chordal_driver(kappa, dt, steps, _rng(15, i))
        for interp in ("sqrt", "constant"):
            p = le.DrivingPath(path.a, dt, path.values, interp)
            chain = le.SlitMapChain.from_path(p)
            fwd = le.forward_map(chain, zs)
            ode = np.array([q.final() for q in le.evolve_point(p, zs)]) + p.values[-1]
            worst = max(worst, float(np.max(np.abs(fwd - ode))))
    a = 0.5
    const = le.DrivingPath.constant(a, 1e-3, 1000, 0.3)
    tr = le.reverse_trace(const)
    slit = 0.3 + 1j * np.sqrt(2 * a * const.times)
    trace_dev = float(np.max(np.abs(tr.points - slit)))
    ok = worst <= 1e-4 and trace_dev <= 1e-6 + tr.tip_eps
    return CriterionResult(15, "engine self-consistency", ok,
                           f"map vs ODE {worst:.2e}, slit trace {trace_dev:.2e} (tip_eps {tr.tip_eps:.1e})",
                           {"map_vs_ode": worst, "slit_deviation": trace_dev, "tip_eps": tr.tip_eps})


CRITERIA: dict[int, tuple[str, Callable[..., CriterionResult]]] = {
    1: ("table", c01_table),
    2: ("exponents", c02_exponent_algebra),
    3: ("cardy", c03_cardy),
    4: ("percolation", c04_percolation),
    5: ("bessel", c05_bessel),
    6: ("boundary-moment", c06_boundary_moment),
    7: ("radial-moment", c07_radial_moment),
    8: ("restriction", c08_restriction),
    9: ("locality", c09_locality),
    10: ("green-tail", c10_green_tail),
    11: ("bubble", c11_bubble),
    12: ("hcap", c12_hcap),
    13: ("beurling", c13_beurling),
    14: ("discrete", c14_discrete),
    15: ("engine", c15_engine),
}

KNOWN_UNATTAINABLE = {5}


def criterion_names() -> list[str]:
    return [name for name, _ in CRITERIA.values()]


def resolve(name: str | int) -> int:
    if isinstance(name, int) or str(name).isdigit():
        n = int(name)
        if n in CRITERIA:
            return n
    else:
        for n, (label, _) in CRITERIA.items():
            if label == name:
                return n
    raise ConfigError(f"unknown criterion {name!r}; available: {', '.join(criterion_names())}")


def run_criterion(name: str | int, workers: int = 1) -> CriterionResult:
    n = resolve(name)
    label, fn = CRITERIA[n]
    t0 = time.perf_counter()
    res = fn(workers=workers)
    res.seconds = time.perf_counter() - t0
    res.known_unattainable = n in KNOWN_UNATTAINABLE
    return res
