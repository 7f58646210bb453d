from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slelab.conformal_core import (HullSpec, PowerSeries, ZipperMap, cauchy_derivatives,
                                   excursion_kernel_strip, hull_domain_map, lambda_flow, parse_hull,
                                   poisson_kernel_H, schwarzian, slit_map, sqrt_like)
from slelab.errors import DomainError, SingularityError

HULLS = ["slit:0,1", "slit:-1.5,0.4", "halfdisk:0,1", "halfdisk:2,0.5", "tilt:0,1,1.0", "tilt:0.5,0.7,2.2"]


def test_parse_hull_round_trip():
    for text in HULLS:
        h = parse_hull(text)
        assert parse_hull(h.spec_string()) == h
    for bad in ("slit:0", "disk:0,1", "halfdisk:0,-1", "tilt:0,1,4"):
        with pytest.raises(DomainError):
            parse_hull(bad)


def test_hcap_closed_forms_and_scaling():
    assert parse_hull("slit:0,2").hcap == pytest.approx(2.0)
    assert parse_hull("halfdisk:0,1").hcap == 1.0
    assert parse_hull("halfdisk:3,0.5").hcap == pytest.approx(0.25)
    for text in HULLS:
        h = parse_hull(text)
        assert h.scaled(3.0).hcap == pytest.approx(9 * h.hcap, rel=1e-10)
        assert h.hcap <= h.rad ** 2 + 1e-12


def test_hcap_monotone_slit_inside_halfdisk():
    assert parse_hull("slit:0,1").hcap <= parse_hull("halfdisk:0,1").hcap
    assert parse_hull("slit:0,0.5").hcap <= parse_hull("slit:0,1").hcap


def test_vertical_slit_map():
    h = parse_hull("slit:0,1.3")
    for z in (0.5 + 2j, -3 + 0.1j, 4j):
        s = np.sqrt(z * z + 1.3 ** 2)
        s = s if s.imag >= 0 else -s  # branch with g(z) ~ z, continuous on H
        assert slit_map(h, z) == pytest.approx(s, abs=1e-13)


def test_half_disk_map():
    h = parse_hull("halfdisk:0,1")
    for z in (0.5 + 2j, -3 + 0.1j, 4j):
        assert slit_map(h, z) == pytest.approx(z + 1 / z, abs=1e-13)


@pytest.mark.parametrize("text", HULLS)
def test_hydrodynamic_normalization(text):
    h = parse_hull(text)
    errs = []
    for R in (4.0, 8.0, 16.0, 32.0):
        R *= max(1.0, h.rad + abs(h.x0))
        z = h.x0 + 1j * R
        g = slit_map(h, z) - h.x0
        errs.append(abs(g - 1j * R - h.hcap / (1j * R)) * R ** 2 / (h.hcap * h.rad))
    # the normalized error stays bounded (a fitted constant) as R grows
    assert max(errs) < 5.0


@pytest.mark.parametrize("text", HULLS)
def test_boundary_maps_to_real_line(text):
    h = parse_hull(text)
    x = np.concatenate([np.linspace(-6, h.x0 - h.rad - 0.01, 20), np.linspace(h.x0 + h.rad + 0.01, 6, 20)]) + 0j
    assert np.max(np.abs(np.imag(slit_map(h, x)))) <= 1e-12


def test_slit_map_rejects_points_in_hull():
    with pytest.raises(DomainError):
        slit_map(parse_hull("halfdisk:0,1"), 0.5j)


def test_poisson_kernel():
    assert poisson_kernel_H(0, 1j) == pytest.approx(1 / math.pi)
    assert poisson_kernel_H(0, 1 + 1j) == pytest.approx(1 / (2 * math.pi))
    from scipy import integrate
    val, _ = integrate.quad(lambda u: poisson_kernel_H(0, u + 0.7j), -np.inf, np.inf)
    assert val == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(DomainError):
        poisson_kernel_H(0, 1.0)


def _strip_oracle(z, yp):
    # cosh maps the half-strip onto H and the edge point i y' to cos y'
    f = np.cosh(z)
    return f.imag / (math.pi * abs(f - math.cos(yp)) ** 2) * math.sin(yp)


@given(st.floats(0.2, 5), st.floats(0.05, math.pi - 0.05), st.floats(0.05, math.pi - 0.05))
def test_excursion_kernel_strip_matches_conformal_oracle(x, y, yp):
    assert excursion_kernel_strip(complex(x, y), yp) == pytest.approx(_strip_oracle(complex(x, y), yp),
                                                                      rel=1e-8, abs=1e-12)


def test_excursion_kernel_strip_symmetry_and_first_mode():
    z = 0.8 + 1.1j
    assert excursion_kernel_strip(z, 0.4) == pytest.approx(
        excursion_kernel_strip(complex(0.8, math.pi - 1.1), math.pi - 0.4), rel=1e-12)
    far = 12 + 1.0j
    ratio = excursion_kernel_strip(far, math.pi / 2) / excursion_kernel_strip(far, math.pi / 4)
    assert ratio == pytest.approx(math.sqrt(2), rel=1e-4)
    with pytest.raises(DomainError):
        excursion_kernel_strip(-1 + 1j, 1.0)


def _mobius(a, b, c, d):
    return (lambda z: (a * z + b) / (c * z + d),
            lambda z: (a * d - b * c) / (c * z + d) ** 2,
            lambda z: -2 * c * (a * d - b * c) / (c * z + d) ** 3,
            lambda z: 6 * c * c * (a * d - b * c) / (c * z + d) ** 4)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_schwarzian_of_mobius_vanishes(a, b, c, d):
    if abs(a * d - b * c) < 0.1:
        return
    f = _mobius(a, b, c, d)
    z = 0.3 + 1.7j
    if abs(c * z + d) < 0.2:
        return
    assert abs(schwarzian(f, z)) < 1e-9
    assert abs(schwarzian(f[0], z)) < 1e-6


def test_schwarzian_half_disk_removal_map():
    x0, r = 2.0, 0.5
    phi = hull_domain_map(HullSpec("halfdisk", x0, r))
    u = -x0
    d1 = 1 - r * r / u ** 2
    d2 = 2 * r * r / u ** 3
    d3 = -6 * r * r / u ** 4
    exact = d3 / d1 - 1.5 * (d2 / d1) ** 2
    assert complex(phi.schwarzian(0.0)).real == pytest.approx(exact, rel=1e-12)
    # finite-difference oracle at step 1e-5
    f = lambda z: z + r * r / (z - x0)
    h = 1e-5 * 1000
    fd1 = (f(h) - f(-h)) / (2 * h)
    fd2 = (f(h) - 2 * f(0) + f(-h)) / h ** 2
    fd3 = (f(2 * h) - 2 * f(h) + 2 * f(-h) - f(-2 * h)) / (2 * h ** 3)
    assert exact == pytest.approx(fd3 / fd1 - 1.5 * (fd2 / fd1) ** 2, rel=1e-3)
    small = hull_domain_map(HullSpec("halfdisk", x0, 0.05))
    assert complex(small.schwarzian(0.0)).real == pytest.approx(-6 * 0.05 ** 2 / x0 ** 4, rel=5e-3)


def test_schwarzian_chain_rule_with_mobius():
    f = lambda z: np.exp(z) + z ** 3
    mob = _mobius(1.0, 0.5, 0.2, 1.0)
    z = 0.3 + 0.4j
    comp = lambda w: f(mob[0](w))
    lhs = schwarzian(comp, z)
    rhs = schwarzian(f, mob[0](z)) * mob[1](z) ** 2
    assert lhs == pytest.approx(rhs, rel=1e-6)


def test_schwarzian_singular():
    with pytest.raises(SingularityError):
        schwarzian((lambda z: z * z, lambda z: 2 * z, lambda z: 2.0, lambda z: 0.0), 0.0)


def test_domain_map_values():
    phi = hull_domain_map(HullSpec("halfdisk", 2.0, 0.5))
    assert complex(phi.prime(0.0)).real == pytest.approx(15 / 16, abs=1e-15)
    empty = hull_domain_map(HullSpec("empty"))
    assert complex(empty(0.3 + 1j)) == 0.3 + 1j
    assert complex(empty.prime(0.0)) == 1.0
    with pytest.raises(DomainError):
        phi(2.0 + 0.1j)


@pytest.mark.parametrize("text", ["slit:2,0.7", "halfdisk:-1.5,0.8", "tilt:1.5,0.6,0.8", "tilt:-2,1,2.5"])
def test_domain_map_derivatives_and_prime_bound(text):
    phi = hull_domain_map(parse_hull(text))
    d0, d1, d2, d3 = phi.derivatives(0.0)
    c0, c1, c2, c3 = cauchy_derivatives(lambda z: phi(np.asarray(z)), 0.2j, radius=0.05)
    e0, e1, e2, e3 = phi.derivatives(0.2j)
    assert (c1, c2, c3) == pytest.approx((e1, e2, e3), rel=1e-7, abs=1e-9)
    assert 0 < complex(d1).real <= 1
    assert abs(complex(d0).imag) < 1e-12


def test_power_series_factorial_convention():
    F = PowerSeries.from_factorial([0, 1, 4, 6])
    assert F.coef == (0.0, 1.0, 2.0, 1.0)


def test_lambda_flow_identity_and_constant_term():
    assert np.allclose(lambda_flow(PowerSeries([0, 1, 0, 0, 0])).coef, 0)
    with pytest.raises(DomainError):
        lambda_flow(PowerSeries([0, -1, 0.3]))


@settings(max_examples=50)
@given(st.lists(st.floats(-1, 1), min_size=5, max_size=8), st.floats(0.1, 5), st.floats(-3, 3))
def test_lambda_flow_properties(coef, r, q0):
    coef = [0.0, 1.0] + coef[2:]
    F = PowerSeries(coef)
    L = lambda_flow(F)
    # constant term is -(3/2) F''(0), with F''(0) = 2 q_2
    assert L.coef[0] == pytest.approx(-1.5 * 2 * coef[2], abs=1e-12)
    G = PowerSeries([r * c for c in coef])
    G = PowerSeries([G.coef[0] + q0] + list(G.coef[1:]))
    assert np.allclose(lambda_flow(G).coef, r * np.array(L.coef), rtol=1e-10, atol=1e-10)


def test_lambda_flow_matches_conjugated_loewner_flow():
    """Finite difference of g*_t o F o g_t^{-1} at t = 0, the outer map from the zipper."""
    F = PowerSeries([0.0, 1.0, 0.3, 0.1, -0.05])
    dt = 1e-5
    h = math.sqrt(2 * dt)  # slit of capacity dt, driving rate a = 1
    Z = ZipperMap(F(1j * h * np.linspace(0, 1, 201)))
    m, rho = 64, 0.3
    z = rho * np.exp(2j * np.pi * np.arange(m) / m)
    up = z.imag >= 0
    w = sqrt_like(np.where(up, z, np.conj(z)), -2 * dt)
    ginv = np.where(up, w, np.conj(w))
    psi = Z(F(ginv))
    coef = (np.fft.fft((psi - F(z)) / dt) / m / rho ** np.arange(m)).real
    L = lambda_flow(F).coef
    assert coef[:len(L)] == pytest.approx(L, abs=1e-4)


def test_zipper_recovers_vertical_slit():
    Z = ZipperMap(np.linspace(0, 1, 50) * 1j)
    assert Z.hcap == pytest.approx(0.5, rel=1e-12)
    assert Z(2 + 1j) == pytest.approx(np.sqrt((2 + 1j) ** 2 + 1), abs=1e-12)
