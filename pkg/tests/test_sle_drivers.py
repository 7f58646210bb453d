from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats

from slelab.conformal_core import parse_hull
from slelab.errors import DomainError
from slelab.params_exponents import cardy_phi, q_exponent
from slelab.rng import RngStream
from slelab.sle_drivers import (
    DriverSpec,
    bessel_hit_probability,
    bessel_hit_probability_exact,
    boundary_moment,
    boundary_moment_exact,
    boundary_moment_girsanov,
    cardy_hitting_mc,
    cot_diffusion_samples,
    green_tail_mc,
    radial_moment,
    restriction_mc,
    sample_chordal_driver,
    sample_driver,
    sample_kappa_rho_driver,
    sample_radial_driver,
    sample_two_sided_radial_driver,
    stationary_theta_check,
    subdomain_driver,
    theta_to_w,
    two_sided_moment,
    two_sided_theta_samples,
    w_to_theta,
)


def test_chordal_driver_reproducible_and_stream_dependent():
    p1 = sample_chordal_driver(4, 1e-3, 100, RngStream(5, 1))
    p2 = sample_chordal_driver(4, 1e-3, 100, RngStream(5, 1))
    p3 = sample_chordal_driver(4, 1e-3, 100, RngStream(5, 2))
    assert np.array_equal(p1.values, p2.values)
    assert not np.array_equal(p1.values, p3.values)
    assert p1.values[0] == 0
    assert p1.a == pytest.approx(0.5)


def test_chordal_driver_increment_variance():
    dt = 1e-2
    inc = np.concatenate([np.diff(sample_chordal_driver(3, dt, 200, RngStream(1, s)).values)
                          for s in range(50)])
    # variance of Brownian increments is dt (the factor kappa sits in a = 2/kappa)
    assert np.var(inc) == pytest.approx(dt, rel=0.05)
    assert abs(np.mean(inc)) < 5 * math.sqrt(dt / len(inc))


def test_kappa_rho_zero_rho_is_chordal():
    rng = RngStream(11)
    chordal = sample_chordal_driver(4, 1e-3, 200, rng)
    res = sample_kappa_rho_driver(4, 0.0, 1.0, 1e-3, 200, rng)
    n = len(res.path.values)
    assert np.array_equal(res.path.values, chordal.values[:n])
    # the force point is pushed away from the driving function
    assert np.all(np.diff(res.force_point) > 0)


def test_kappa_rho_positive_rho_repels():
    # rho > 0 drifts U away from the force point sitting at +1
    ends = [sample_kappa_rho_driver(4, 4.0, 1.0, 1e-3, 300, RngStream(3, s)).path.values[-1]
            for s in range(200)]
    base = [sample_chordal_driver(4, 1e-3, 300, RngStream(3, s)).values[-1] for s in range(200)]
    assert np.mean(ends) < np.mean(base)


def test_subdomain_at_kappa_six_is_chordal():
    rng = RngStream(21)
    hull = parse_hull("halfdisk:2,0.5")
    res = subdomain_driver(6, hull, 1e-3, 500, rng)
    chordal = sample_chordal_driver(6, 1e-3, 500, rng)
    n = len(res.path.values)
    assert np.array_equal(res.path.values, chordal.values[:n])


def test_subdomain_empty_hull_is_chordal():
    rng = RngStream(4)
    res = subdomain_driver(8 / 3, parse_hull("empty"), 1e-3, 100, rng)
    assert np.array_equal(res.path.values, sample_chordal_driver(8 / 3, 1e-3, 100, rng).values)


def test_subdomain_rejects_hull_touching_origin():
    with pytest.raises(DomainError):
        subdomain_driver(8 / 3, parse_hull("halfdisk:0.2,0.5"), 1e-3, 10, RngStream(0))


def test_radial_and_two_sided_drift_free_cases():
    rng = RngStream(8)
    chordal6 = sample_chordal_driver(6, 1e-3, 300, rng).values
    radial6 = sample_radial_driver(6, 1j, 1e-3, 300, rng).path.values
    assert np.array_equal(radial6, chordal6[:len(radial6)])
    chordal8 = sample_chordal_driver(8, 1e-3, 300, rng).values
    two8 = sample_two_sided_radial_driver(8, 1j, 1e-3, 300, rng).path.values
    assert np.array_equal(two8, chordal8[:len(two8)])


def test_radial_driver_stops_when_target_swallowed():
    res = sample_radial_driver(4, 0.05j, 1e-3, 5000, RngStream(2))
    assert res.truncated
    assert len(res.path.values) == res.truncated_at + 1


@pytest.mark.parametrize("kind", ["chordal", "kapparho", "radial", "two-sided", "subdomain"])
def test_sample_driver_dispatch(kind):
    driver = DriverSpec(kind, 4.0, 1e-3, 50, hull=parse_hull("halfdisk:3,0.5"))
    res = sample_driver(driver, RngStream(1))
    assert res.path.values[0] == 0
    assert len(res.path.values) <= 51


def test_driver_spec_validation():
    with pytest.raises(DomainError):
        DriverSpec("loop", 4.0, 1e-3, 10)
    with pytest.raises(DomainError):
        DriverSpec("chordal", -1.0, 1e-3, 10)
    with pytest.raises(DomainError):
        DriverSpec("chordal", 4.0, 0.0, 10)
    with pytest.raises(DomainError):
        DriverSpec("radial", 4.0, 1e-3, 10, target=1.0)
    with pytest.raises(DomainError):
        DriverSpec("kapparho", 4.0, 1e-3, 10, force_point=0.0)


def test_bessel_exact_limits():
    # a -> 0 is Brownian motion: reflection principle
    x, t = 0.7, 2.0
    assert bessel_hit_probability_exact(1e-12, x, t) == pytest.approx(special.erfc(x / math.sqrt(2 * t)))
    assert bessel_hit_probability_exact(0.5, x, t) == 0.0
    assert bessel_hit_probability_exact(1.0, x, t) == 0.0
    vals = [bessel_hit_probability_exact(1 / 3, x, h) for h in (0.1, 1, 10, 100)]
    assert np.all(np.diff(vals) > 0)
    with pytest.raises(DomainError):
        bessel_hit_probability_exact(0.3, -1.0, 1.0)


@pytest.mark.parametrize("method", ["exact", "euler"])
def test_bessel_mc_matches_exact(method):
    a, x, t = 0.3, 1.0, 2.0
    est = bessel_hit_probability(a, x, t, 4000, RngStream(12), method=method)
    exact = bessel_hit_probability_exact(a, x, t)
    # the Euler scheme with a cutoff is biased upwards by O(sqrt(dt))
    slack = 0.0 if method == "exact" else 0.03
    assert abs(est.estimate - exact) <= 4 * est.stderr + slack


def test_bessel_mc_never_absorbed_for_large_a():
    est = bessel_hit_probability(1.0, 1.0, 5.0, 2000, RngStream(2))
    assert est.estimate == 0


def test_boundary_moment_exact_at_small_time_and_girsanov():
    lam, a = 1.0, 0.75
    assert float(boundary_moment_exact(lam, a, 1e-6)) == pytest.approx(1.0, abs=1e-3)
    t = 5.0
    est = boundary_moment_girsanov(lam, a, t, replicas=20000, rng=RngStream(3))
    assert abs(est.estimate - float(boundary_moment_exact(lam, a, t))) <= 4 * est.stderr


def test_boundary_moment_mc_short_run():
    lam, a = 1.0, 0.75
    times = np.array([1.0, 4.0, 16.0])
    res = boundary_moment(lam, a, times, replicas=4000, rng=RngStream(9))
    exact = boundary_moment_exact(lam, a, times)
    assert np.all(np.abs(res.mean - exact) <= 4 * res.stderr + 1e-3)
    assert np.all(np.abs(res.martingale - 1) <= 4 * res.martingale_stderr + 1e-3)


def test_boundary_moment_lambda_zero_is_one():
    res = boundary_moment(0.0, 0.75, [1.0, 2.0], replicas=10, rng=RngStream(0))
    assert np.all(res.mean == 1)


def test_two_sided_moment_martingale():
    a = 0.75
    res = two_sided_moment(1.0, 0.5, a, 1.0, -1.0, [0.5, 2.0], replicas=2000, rng=RngStream(6))
    assert np.all(np.abs(res.martingale - res.martingale[0]) <= 5 * res.martingale_stderr + 0.02)
    with pytest.raises(DomainError):
        two_sided_moment(1.0, 1.0, a, 1.0, 1.0, [1.0])


@given(theta=st.floats(0.01, math.pi - 0.01))
def test_theta_w_roundtrip(theta):
    assert float(w_to_theta(theta_to_w(theta))) == pytest.approx(theta, rel=1e-12)


def test_stationary_law_of_angular_diffusion():
    res = stationary_theta_check(0.5, t=8.0, replicas=4000, rng=RngStream(17), dtau=2e-3)
    assert res["p_value"] > 1e-3


def test_cot_diffusion_requires_nonabsorbing_drift():
    with pytest.raises(DomainError):
        cot_diffusion_samples(0.3, 1.0, 1.0, 10)
    samples = cot_diffusion_samples(1.0, 1.0, 0.5, 500, RngStream(1))
    assert np.all((samples > 0) & (samples < math.pi))


def test_two_sided_routes_agree():
    a = 0.75
    s1 = two_sided_theta_samples(a, 1 + 1j, 0.3, 1500, RngStream(5), route="chordal", h=2e-3)
    s2 = two_sided_theta_samples(a, 1 + 1j, 0.3, 1500, RngStream(6), route="radial", dtau=2e-3)
    assert stats.ks_2samp(s1, s2).pvalue > 1e-3


def test_radial_moment_short_run():
    lam, a = 5 / 8, 0.75
    res = radial_moment(lam, a, math.pi / 2, np.linspace(0.5, 2.0, 4), replicas=3000,
                        rng=RngStream(8), dtau=2e-3)
    start = res.extra["martingale_start"]
    assert np.all(np.abs(res.martingale - start) <= 5 * res.martingale_stderr + 0.01)
    with pytest.raises(DomainError):
        radial_moment(lam, 0.3, 1.0, [1.0])


def test_cardy_short_run():
    y = 1.0
    est = cardy_hitting_mc(6, y, 2000, RngStream(4), dt=1e-3)
    assert abs(est.estimate - cardy_phi(y, 1 / 3)) <= 4 * est.stderr + 0.01
    with pytest.raises(DomainError):
        cardy_hitting_mc(4, y, 10)


def test_green_tail_short_run():
    res = green_tail_mc(6, 1j, [0.4, 0.2, 0.1], 3000, RngStream(5), dtau=2e-3)
    assert np.all(np.diff(res.prob) < 0)
    assert res.exponent == pytest.approx(2 - 1 - 6 / 8, abs=0.25)
    with pytest.raises(DomainError):
        green_tail_mc(8, 1j, [0.1], 10)


def test_restriction_short_run():
    hull = parse_hull("halfdisk:2,0.5")
    est = restriction_mc(hull, 400, RngStream(3))
    exact = (1 - 0.25 / 4) ** (5 / 8)
    assert abs(est.estimate - exact) <= 4 * est.stderr + 0.01
    with pytest.raises(DomainError):
        restriction_mc(parse_hull("slit:1,1"), 10)


def test_q_exponent_used_by_moments():
    assert q_exponent(0.0, 0.75) == 0
