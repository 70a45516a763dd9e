import numpy as np
import pytest
from scipy.integrate import quad as scalar_quad

from fibernli.errors import ParameterError
from fibernli.linkmodel import (
    LinkConfig,
    PulseShape,
    ase_power,
    beta2_from_dispersion,
    mu,
    nu,
    triplet_beating,
    zeta,
)


def test_beta2_conversion():
    assert beta2_from_dispersion(0.0, 1550) == 0.0
    # hand value: -16.7e-6 * (1550e-9)^2 / (2 pi 299792458)
    hand = -16.7e-6 * 1550e-9**2 / (2 * np.pi * 299792458.0)
    b = beta2_from_dispersion(16.7, 1550)
    assert b == pytest.approx(-2.1299e-26, rel=1e-4)
    assert b == pytest.approx(hand, rel=1e-12)
    assert beta2_from_dispersion(33.4, 1550) == pytest.approx(2 * b, rel=1e-14)
    with pytest.raises(ParameterError):
        beta2_from_dispersion(16.7, 0)


def test_link_validation_and_units(link):
    assert link.alpha == pytest.approx(0.22 * np.log(10) / 20 / 1e3)
    assert link.beta2 < 0
    assert link.span_gain_db == pytest.approx(22.0)
    assert 10 * np.log10(link.span_gain) == pytest.approx(22.0)
    for bad in ({"alpha_db_per_km": 0}, {"span_length_km": -1}, {"num_spans": 0}, {"num_spans": 1.5}):
        with pytest.raises(ParameterError):
            LinkConfig(**bad)
    assert set(link.derived()) >= {"alpha_np_per_m", "beta2_s2_per_m", "gamma_per_w_m"}


def test_zeta_limits(link):
    a, L, g = link.alpha, link.span_length, link.gamma
    z0 = zeta(5e9, 1e9, 1e9, link)
    assert z0 == pytest.approx(g * (1 - np.exp(-2 * a * L)) / (2 * a))
    assert zeta(10e9, 10e9, 10e9, link) == zeta(-10e9, -10e9, -10e9, link)
    lossy = LinkConfig(alpha_db_per_km=1e6)
    assert abs(zeta(3e9, 7e9, 1e9, lossy)) < 1e-6 * abs(zeta(3e9, 7e9, 1e9, link))


def test_product_dependence(link):
    # (f1 - f)(f2 - f) = 12e18 for both triples
    args = [(4e9, 3e9, 0.0), (5e9, 4e9, 1e9)]
    for fn in (zeta, nu, mu):
        v = [fn(*a, link) for a in args]
        assert v[0] == pytest.approx(v[1], rel=1e-12)


def test_nu_limits_and_bound(link):
    one = LinkConfig(num_spans=1)
    f1 = np.linspace(-20e9, 20e9, 41)
    assert np.allclose(nu(f1[:, None], f1[None, :], 1e9, one), 1.0)
    assert nu(0.0, 3e9, 0.0, link) == pytest.approx(10.0)
    grid = nu(f1[:, None], f1[None, :], 2e9, link)
    assert np.all(np.abs(grid) <= 10 * (1 + 1e-12))
    # continuity across the removable singularity
    eps = 1e-3
    near = nu(eps, 1.0, 0.0, link)
    theta = 2 * link.beta2 * np.pi**2 * eps
    limit = 10 * np.exp(1j * theta * 9 * link.span_length)
    assert abs(near - limit) / abs(limit) < 1e-6


def test_mu_composition(link):
    one = LinkConfig(num_spans=1)
    assert mu(3e9, -2e9, 1e9, one) == pytest.approx(zeta(3e9, -2e9, 1e9, one))
    v = mu(3e9, -2e9, 1e9, link)
    assert abs(v) == pytest.approx(abs(zeta(3e9, -2e9, 1e9, link)) * abs(nu(3e9, -2e9, 1e9, link)))
    a, L = link.alpha, link.span_length
    assert mu(1e9, 0.0, 1e9, link) == pytest.approx(10 * link.gamma * (1 - np.exp(-2 * a * L)) / (2 * a))


def test_triplet_beating(pulse, link):
    assert triplet_beating(30e9, 0.0, 0.0, pulse, link) == 0
    a = triplet_beating(3e9, -5e9, 1e9, pulse, link)
    b = triplet_beating(-5e9, 3e9, 1e9, pulse, link)
    assert a == pytest.approx(b)
    rect = PulseShape(rolloff=0.0)
    one = LinkConfig(num_spans=1)
    al, L = one.alpha, one.span_length
    expect = rect.spectrum(0.0) ** 3 * one.gamma * (1 - np.exp(-2 * al * L)) / (2 * al)
    assert triplet_beating(0.0, 0.0, 0.0, rect, one) == pytest.approx(expect)


@pytest.mark.parametrize("rolloff", [0.0, 0.05, 0.5, 1.0])
def test_rrc_normalization_and_symmetry(rolloff):
    p = PulseShape(rolloff=rolloff)
    edge = p.bandwidth / 2
    pts = [(1 - rolloff) * p.symbol_rate_hz / 2] if 0 < rolloff < 1 else None
    e, _ = scalar_quad(lambda f: p.spectrum(f) ** 2, -edge, edge, points=None if pts is None else [-pts[0], pts[0]],
                       limit=200, epsabs=0, epsrel=1e-10)
    assert p.symbol_rate_hz * e == pytest.approx(1.0, abs=1e-6)
    f = np.linspace(-edge * 1.2, edge * 1.2, 101)
    assert np.array_equal(p.spectrum(f), p.spectrum(-f))
    assert np.all(p.spectrum(f) >= 0)


def test_rrc_impulse_matches_spectrum(pulse):
    # inverse transform of S evaluated numerically at a few instants
    T = pulse.symbol_period
    for t in (0.0, 0.3 * T, T, 2.5 * T, 1 / (4 * pulse.rolloff) * T):
        val, _ = scalar_quad(lambda f: pulse.spectrum(f) * np.cos(2 * np.pi * f * t), -pulse.bandwidth / 2,
                             pulse.bandwidth / 2, limit=400, epsabs=1e-14)
        assert pulse.impulse_response(t) == pytest.approx(val, abs=1e-7)


def test_rrc_validation():
    with pytest.raises(ParameterError):
        PulseShape(rolloff=1.5)
    with pytest.raises(ParameterError):
        PulseShape(symbol_rate_hz=0)


def test_ase_power_formula(link, pulse):
    h, c = 6.62607015e-34, 299792458.0
    G = 10 ** 2.2
    expect = 10 * (G - 1) * 10 ** 0.6 / 2 * h * c / 1550e-9 * 32e9
    assert ase_power(link, pulse) == pytest.approx(expect, rel=1e-12)
