import cmath
import math

import numpy as np
import pytest

from fisherdimer.errors import DomainError
from fisherdimer.lattice import (ModelParams, Regime, a_squared_coeffs, build_kasteleyn, char_poly,
                                 critical_anisotropy, dual_anisotropy, gamma_anisotropy,
                                 independent_anisotropy, regime_of, spectral_roots)


def torus_points(rng, n):
    return np.exp(2j * np.pi * rng.random(n)), np.exp(2j * np.pi * rng.random(n))


def test_kasteleyn_entries():
    K = build_kasteleyn(ModelParams(0.5, 0.5), 1, 1)
    assert K[0, 5] == pytest.approx(0.25)
    assert K[2, 3] == pytest.approx(0.5)


def test_kasteleyn_antisymmetric_and_sparse():
    p = ModelParams(0.3, 0.7)
    K1 = build_kasteleyn(p, 1, 1)
    assert np.all(K1 + K1.T == 0)
    rng = np.random.default_rng(0)
    z, w = torus_points(rng, 5)
    for zi, wi in zip(z, w):
        K = build_kasteleyn(p, zi, wi)
        # b/z and -b z entries: antisymmetric up to (z, w) -> (1/z, 1/w)
        assert np.abs(K + build_kasteleyn(p, 1 / zi, 1 / wi).T).max() < 1e-15
        assert np.abs(K + K.conj().T).max() < 1e-15
        assert np.all(np.diag(K) == 0)
        # six triangle edges, one a-edge, two b-edges
        upper = {(i, j) for i, j in zip(*np.nonzero(np.triu(K, 1)))}
        assert upper == {(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5), (2, 3), (0, 5), (1, 4)}


def test_kasteleyn_rejects_zero():
    with pytest.raises(DomainError):
        build_kasteleyn(ModelParams(0.3, 0.7), 0, 1)
    with pytest.raises(DomainError):
        char_poly(ModelParams(0.3, 0.7), 1, 0)


def test_det_matches_char_poly_example():
    p = ModelParams(0.3, 0.7)
    z, w = cmath.exp(1j * math.pi / 3), cmath.exp(-1j * math.pi / 5)
    d = np.linalg.det(build_kasteleyn(p, z, w))
    P = char_poly(p, z, w)
    assert abs(d - P) / abs(P) < 1e-12


def test_det_matches_char_poly_random():
    rng = np.random.default_rng(1)
    for _ in range(20):
        p = ModelParams(rng.uniform(0.05, 0.95), rng.uniform(0.05, 1.0))
        z, w = torus_points(rng, 1)
        P = char_poly(p, z[0], w[0])
        assert abs(np.linalg.det(build_kasteleyn(p, z[0], w[0])) - P) / abs(P) < 1e-12


def test_char_poly_plugin():
    x, u = 0.5, 0.5
    a, b = x, u * x
    expect = a * a + 2 * b * b + a * a * b ** 4 + 4 * a * b * (1 - b * b) + 2 * b * b * (1 - a * a)
    assert char_poly(ModelParams(x, u), 1, 1) == pytest.approx(expect, rel=1e-14)


def test_char_poly_vanishes_at_critical_point():
    x = 0.5
    uc = critical_anisotropy(x)
    assert uc == pytest.approx(0.472136, abs=1e-6)
    assert abs(char_poly(ModelParams(x, uc), -1, -1)) < 1e-12
    # factorization P(-1,-1) = x^2 (1 - 2u - u^2 x^2)^2
    for u in (0.2, 0.7):
        assert char_poly(ModelParams(x, u), -1, -1) == pytest.approx(x * x * (1 - 2 * u - u * u * x * x) ** 2, rel=1e-12)


def test_char_poly_inversion_symmetry():
    rng = np.random.default_rng(2)
    p = ModelParams(0.4, 0.6)
    z, w = torus_points(rng, 100)
    for zi, wi in zip(z, w):
        assert abs(char_poly(p, zi, wi) - char_poly(p, 1 / zi, 1 / wi)) < 1e-12 * abs(char_poly(p, zi, wi))


def test_special_anisotropies():
    assert critical_anisotropy(1) == pytest.approx(math.sqrt(2) - 1, abs=1e-15)
    assert independent_anisotropy(0.5) == pytest.approx((1 - math.sqrt(0.75)) / 0.25, abs=1e-15)
    assert independent_anisotropy(0.5) == pytest.approx(0.5358984, abs=1e-7)
    assert gamma_anisotropy(0.1, 0) == 0.5
    assert gamma_anisotropy(0.1, 1e-12) == 0.5


def test_gamma_endpoints():
    for x in (0.05, 0.3, 0.9):
        assert abs(gamma_anisotropy(x, -1) - critical_anisotropy(x)) < 1e-14
        assert abs(gamma_anisotropy(x, 1) - independent_anisotropy(x)) < 1e-14


def test_gamma_domain():
    with pytest.raises(DomainError):
        gamma_anisotropy(0.5, 5.0)
    with pytest.raises(DomainError):
        critical_anisotropy(0.0)


def test_anisotropy_ordering():
    for x in np.linspace(0.005, 0.995, 100):
        assert critical_anisotropy(x) < independent_anisotropy(x) < 1


def test_roots_below_critical():
    prof = spectral_roots(ModelParams(0.5, 0.3))
    assert prof.regime is Regime.BELOW_CRITICAL
    assert abs(prof.r.imag) < 1e-12 and abs(prof.s.imag) < 1e-12
    assert 1 < prof.r.real < prof.s.real


def test_roots_critical():
    prof = spectral_roots(ModelParams(0.5, critical_anisotropy(0.5)))
    assert prof.regime is Regime.CRITICAL
    assert abs(prof.r - 1) < 1e-10
    assert prof.s.real > 1


def test_roots_above_independent():
    prof = spectral_roots(ModelParams(0.5, 0.9))
    assert prof.regime is Regime.ABOVE_INDEPENDENT
    assert abs(prof.r) < 1
    assert abs(prof.s - 1 / prof.r.conjugate()) < 1e-10


def test_roots_solve_a_squared():
    for u in (0.3, 0.5, 0.53, 0.9):
        p = ModelParams(0.5, u)
        prof = spectral_roots(p)
        c = a_squared_coeffs(p)
        for v in (prof.r, prof.s, 1 / prof.r, 1 / prof.s):
            scale = np.polyval(np.abs(c), abs(v))
            assert abs(np.polyval(c, v)) < 1e-10 * scale


def _bisect_change(x, lo, hi):
    r_lo = regime_of(ModelParams(x, lo))
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if regime_of(ModelParams(x, mid)) == r_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_regime_changes_at_special_values():
    x = 0.5
    uc, ui = critical_anisotropy(x), independent_anisotropy(x)
    sweep = [regime_of(ModelParams(x, u)) for u in np.linspace(0.05, 1.9, 200)]
    changes = sum(a != b for a, b in zip(sweep, sweep[1:]))
    assert changes == 2
    assert abs(_bisect_change(x, 0.3, 0.5) - uc) < 1e-8
    assert abs(_bisect_change(x, 0.5, 0.8) - ui) < 1e-8


def test_regime_is_deterministic():
    p = ModelParams(0.3, 0.4)
    assert all(regime_of(p) == regime_of(p) for _ in range(3))


def test_dual():
    p = ModelParams(0.2, 0.3)
    assert dual_anisotropy(p).u == pytest.approx(83.33333333333, rel=1e-12)
    x = 0.4
    d = dual_anisotropy(ModelParams(x, critical_anisotropy(x)))
    assert d.u == pytest.approx((1 + math.sqrt(1 + x * x)) / (x * x), rel=1e-14)
    q = ModelParams(0.37, 0.81)
    assert abs(dual_anisotropy(dual_anisotropy(q), strict=False).u - q.u) < 1e-14


def test_dual_rejects_large_u():
    with pytest.raises(DomainError):
        dual_anisotropy(ModelParams(0.5, 2.5))


def test_params_validation():
    with pytest.raises(DomainError):
        ModelParams(-0.1, 0.5)
    with pytest.raises(DomainError):
        ModelParams(0.5, 0.5).with_u(3.0).require_thermo()
