from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slelab.conformal_core import parse_hull, slit_map
from slelab.errors import DomainError, SwallowedError
from slelab.loewner_engine import (
    DrivingPath,
    SlitMapChain,
    evolve_point,
    forward_map,
    inverse_map,
    koebe_distance,
    radial_disk_flow,
    reverse_trace,
    swallow_cutoff,
)


def brownian_path(kappa, dt, steps, seed, interpolation="sqrt"):
    rng = np.random.default_rng(seed)
    inc = math.sqrt(dt) * rng.standard_normal(steps)
    return DrivingPath(2 / kappa, dt, np.concatenate([[0.0], np.cumsum(inc)]), interpolation)


def smooth_path(dt, steps, a=0.5):
    return DrivingPath.from_function(a, dt, steps, lambda t: 0.8 * math.sin(2 * t))


def test_driving_path_validation():
    with pytest.raises(DomainError):
        DrivingPath(0.5, 1e-3, [])
    with pytest.raises(DomainError):
        DrivingPath(0.5, -1.0, [0.0, 1.0])
    with pytest.raises(DomainError):
        DrivingPath(-1.0, 1e-3, [0.0, 1.0])
    with pytest.raises(DomainError):
        DrivingPath(0.5, 1e-3, [0.0, np.nan])
    with pytest.raises(DomainError):
        DrivingPath(0.5, 1e-3, [0.0, 1.0], interpolation="cubic")


def test_zero_driving_imaginary_point():
    a, y0 = 0.5, 0.7
    # g = sqrt(z^2 + 2at) puts iy0 at i sqrt(y0^2 - 2at) until it is swallowed at y0^2/2a
    path = DrivingPath.constant(a, 1e-3, 400)
    p = evolve_point(path, 1j * y0)
    expected = np.sqrt(y0 ** 2 - 2 * a * p.times)
    assert p.status == "alive"
    assert np.max(np.abs(p.Y - expected)) < 1e-10
    assert np.max(np.abs(p.X)) < 1e-12
    assert np.allclose(p.gprime, y0 / expected, atol=1e-9)
    late = evolve_point(DrivingPath.constant(a, 1e-3, 600), 1j * y0)
    cut = swallow_cutoff(a, 1e-3)
    assert (y0 ** 2 - cut ** 2) / (2 * a) - 1e-3 <= late.swallowed_at <= y0 ** 2 / (2 * a)


def test_initial_values():
    path = brownian_path(4, 1e-3, 50, 1)
    for z in (0.3 + 0.2j, -1 + 2j, 5j):
        p = evolve_point(path, z)
        assert p.upsilon[0] == pytest.approx(z.imag)
        assert p.gprime[0] == 1
        assert p.g[0] == pytest.approx(z)


def test_real_point_never_swallowed():
    a, x = 0.5, 0.8
    path = DrivingPath.constant(a, 1e-3, 1000)
    p = evolve_point(path, x)
    assert p.status == "alive"
    assert np.max(np.abs(p.X - np.sqrt(x * x + 2 * a * p.times))) < 1e-10
    assert np.all(p.Y == 0)


def test_point_at_driving_value_swallowed_immediately():
    path = DrivingPath.constant(0.5, 1e-3, 10, c=0.25)
    p = evolve_point(path, 0.25)
    assert p.swallowed_at == 0.0
    assert p.status == "swallowed"
    with pytest.raises(SwallowedError):
        koebe_distance(p)


def test_lower_half_plane_rejected_by_ode():
    path = DrivingPath.constant(0.5, 1e-3, 10)
    with pytest.raises(DomainError):
        evolve_point(path, 1 - 1j)


def test_constant_driving_trace_is_vertical_slit():
    a, c = 0.5, 0.3
    path = DrivingPath.constant(a, 1e-3, 400, c)
    tr = reverse_trace(path, tip_eps=0.0)
    expected = c + 1j * np.sqrt(2 * a * path.times)
    assert np.max(np.abs(tr.points - expected)) < 1e-9


def test_zero_steps_single_point():
    path = DrivingPath(0.5, 1e-3, [0.4])
    tr = reverse_trace(path, tip_eps=0.0)
    assert len(tr.points) == 1
    assert tr.points[0] == 0.4
    assert evolve_point(path, 1j).final() == 1j - 0.4


def test_trace_starts_at_driving_value_and_stays_in_closure():
    path = brownian_path(6, 1e-3, 500, 2)
    tr = reverse_trace(path, tip_eps=0.0)
    assert tr.points[0] == pytest.approx(path.values[0])
    assert np.all(tr.points.imag >= 0)
    assert tr.points.shape == path.values.shape


def test_refinement_consistency():
    t_end = 0.5
    coarse = reverse_trace(smooth_path(t_end / 200, 200), tip_eps=0.0)
    fine = reverse_trace(smooth_path(t_end / 400, 400), tip_eps=0.0)
    finer = reverse_trace(smooth_path(t_end / 800, 800), tip_eps=0.0)
    d1 = np.max(np.abs(coarse.points - fine.points[::2]))
    d2 = np.max(np.abs(fine.points - finer.points[::2]))
    assert d2 < d1
    assert d2 < 1e-3


def test_empty_chain_is_identity():
    chain = SlitMapChain(0.5, 0.0, [], [])
    z = np.array([1j, 2 + 0.5j, -3.0 + 0j])
    assert np.array_equal(forward_map(chain, z), z)
    assert chain.hcap == 0


def test_single_vertical_step_matches_slit_map():
    a, dt, u = 0.5, 0.02, 0.4
    chain = SlitMapChain(a, u, [dt], [0.0])
    h = math.sqrt(2 * a * dt)
    hull = parse_hull(f"slit:{u},{h}")
    z = np.array([1j, 0.4 + 2j, -1 + 0.1j, 3.0 + 0j])
    assert np.max(np.abs(forward_map(chain, z) - slit_map(hull, z))) < 1e-12


def test_forward_map_matches_ode_on_brownian_chain():
    path = brownian_path(4, 1e-2, 100, 7)
    chain = SlitMapChain.from_path(path)
    p = evolve_point(path, 2j)
    assert abs(forward_map(chain, 2j) - (p.final() + path.values[-1])) < 1e-4


@pytest.mark.parametrize("interpolation", ["sqrt", "constant"])
def test_forward_inverse_roundtrip(interpolation):
    path = brownian_path(3, 1e-3, 300, 3, interpolation)
    chain = SlitMapChain.from_path(path)
    z = np.array([1j, 0.5 + 0.5j, -2 + 1.5j])
    assert np.max(np.abs(inverse_map(chain, forward_map(chain, z)) - z)) < 1e-9


def test_conjugate_symmetry():
    path = brownian_path(6, 1e-3, 300, 4)
    chain = SlitMapChain.from_path(path)
    z = np.array([0.3 + 1j, -1 + 0.2j, 2 + 3j])
    assert np.allclose(forward_map(chain, np.conj(z)), np.conj(forward_map(chain, z)), atol=1e-13)


def test_swallowed_point_raises_with_cutoff():
    path = DrivingPath.constant(0.5, 1e-3, 10, 0.1)
    chain = SlitMapChain.from_path(path)
    with pytest.raises(SwallowedError) as exc:
        forward_map(chain, 0.1 + 0j, cutoff=1e-9)
    assert exc.value.step == 0


def test_hcap_additivity():
    a, dt = 0.75, 1e-3
    path = brownian_path(8 / 3, dt, 400, 5)
    chain = SlitMapChain.from_path(path)
    assert chain.hcap == pytest.approx(a * path.horizon)
    halves = [SlitMapChain(a, 0.0, chain.dts[:200], chain.dus[:200]),
              SlitMapChain(a, 0.0, chain.dts[200:], chain.dus[200:])]
    assert halves[0].hcap + halves[1].hcap == pytest.approx(chain.hcap)
    # g(z) = z + hcap/z + O(1/z^2) with the hull centred near the driving values
    big = 1e4j
    assert ((forward_map(chain, big) - big) * big).real == pytest.approx(chain.hcap, rel=1e-3)


def test_scaling_covariance():
    r = 2.5
    base = brownian_path(4, 1e-3, 300, 6)
    scaled = DrivingPath(base.a, base.dt * r * r, base.values * r)
    t0 = reverse_trace(base)
    t1 = reverse_trace(scaled)
    assert t1.tip_eps == pytest.approx(r * t0.tip_eps)
    assert np.max(np.abs(t1.points - r * t0.points)) < 1e-9


def test_reverse_forward_duality():
    path = smooth_path(1e-3, 500)
    chain = SlitMapChain.from_path(path)
    eps = 1e-6
    tip = reverse_trace(path, tip_eps=eps).points[-1]
    direct = inverse_map(chain, path.values[-1] + 1j * eps)[0]
    assert abs(tip - direct) < 1e-6
    assert abs(forward_map(chain, tip) - (path.values[-1] + 1j * eps)) < 1e-6


def test_koebe_interval_at_time_zero():
    path = DrivingPath.constant(0.5, 1e-3, 10)
    p = evolve_point(path, 1j)
    assert koebe_distance(p, 0) == pytest.approx((0.25, 4.0))


def test_koebe_interval_contains_distance_to_slit_and_line():
    a = 0.5
    path = DrivingPath.constant(a, 1e-3, 500)
    zs = [2j, 0.5 + 0.5j, -0.3 + 1.2j, 1.5 + 0.1j]
    for p in evolve_point(path, zs):
        mids = []
        for k in range(0, len(p.times), 50):
            h = math.sqrt(2 * a * p.times[k])
            z = p.z0
            y = min(max(z.imag, 0.0), h)
            dist = min(abs(z - 1j * y), z.imag)
            lo, hi = koebe_distance(p, k)
            assert lo <= dist * (1 + 1e-9) and dist <= hi * (1 + 1e-9)
            mids.append(math.sqrt(lo * hi))
        assert np.all(np.diff(mids) <= 1e-12)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10 ** 6), x=st.floats(-2, 2), y=st.floats(0.05, 2))
def test_upsilon_and_height_nonincreasing(seed, x, y):
    path = brownian_path(4, 1e-3, 200, seed)
    p = evolve_point(path, complex(x, y))
    n = len(p.times)
    assert np.all(np.diff(p.Y[:n]) <= 1e-10)
    assert np.all(np.diff(p.upsilon[:n]) <= 1e-10)


def test_radial_origin_fixed():
    path = brownian_path(4, 1e-2, 200, 8)
    r = radial_disk_flow(path, 0.0)
    assert np.max(np.abs(r.values)) == 0
    assert np.allclose(r.log_derivative_at_zero, r.times, atol=1e-12)
    assert np.allclose(r.log_derivative, r.times, atol=1e-8)


def test_radial_zero_driving_keeps_real_points_real():
    path = DrivingPath.constant(0.5, 1e-3, 300)
    r = radial_disk_flow(path, -0.4)
    assert np.max(np.abs(r.values.imag)) < 1e-15
    assert np.all(np.diff(np.abs(r.values)) > 0)


def test_radial_boundary_angle_drift():
    # near the circle the angle phi of g obeys d(phi/2)/dt = cot(phi/2)/2 for U = 0
    path = DrivingPath.constant(0.5, 1e-4, 200)
    phi0 = 2.0
    r = radial_disk_flow(path, (1 - 1e-12) * np.exp(1j * phi0), cutoff=0.0)
    psi = np.angle(r.values) / 2
    dpsi = np.gradient(psi, r.times)
    assert np.allclose(dpsi[1:-1], 0.5 / np.tan(psi[1:-1]), rtol=1e-5)


def test_radial_rejects_outside_disk():
    path = DrivingPath.constant(0.5, 1e-3, 10)
    with pytest.raises(DomainError):
        radial_disk_flow(path, 1.0)


def test_chain_rows_roundtrip():
    path = brownian_path(2, 1e-3, 20, 9)
    chain = SlitMapChain.from_path(path)
    rows = chain.to_rows()
    rebuilt = SlitMapChain(chain.a, chain.u0, [r[0] for r in rows], [r[1] for r in rows])
    assert np.allclose(rebuilt.driving, path.values, atol=1e-14)
