import itertools
import math

import numpy as np
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from fisherdimer.cli import RunConfig, parse_grid
from fisherdimer.kernels import m_point_correlation
from fisherdimer.lattice import ModelParams, char_poly, critical_anisotropy, dual_anisotropy, independent_anisotropy
from fisherdimer.pfaffian import particle_probability, pfaffian
from fisherdimer.sampler import SpinField, counter_uniforms, estimate, matching_defects, spins_to_dimers

FAST = settings(max_examples=40, deadline=None)

xs = st.floats(0.05, 0.95)
us = st.floats(0.05, 1.5)
angles = st.floats(0, 2 * math.pi)


def antisym(seed, n, complex_):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n)) + (1j * rng.standard_normal((n, n)) if complex_ else 0)
    return A - A.T


@FAST
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 8), st.booleans())
def test_pfaffian_congruence(seed, half, complex_):
    # Pf(B A B^T) = det(B) Pf(A)
    n = 2 * half
    A = antisym(seed, n, complex_)
    B = np.random.default_rng(seed + 1).standard_normal((n, n))
    lhs = pfaffian(B @ A @ B.T)
    rhs = np.linalg.det(B) * pfaffian(A)
    assert abs(lhs - rhs) <= 1e-8 * max(1.0, abs(rhs))


@FAST
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 8))
def test_pfaffian_row_swap_flips_sign(seed, half):
    n = 2 * half
    if n < 4:
        return
    A = antisym(seed, n, False)
    P = np.eye(n)[[1, 0] + list(range(2, n))]
    assert abs(pfaffian(P @ A @ P.T) + pfaffian(A)) <= 1e-9 * max(1.0, abs(pfaffian(A)))


@FAST
@given(xs, us, angles, angles)
def test_char_poly_real_nonnegative_on_torus(x, u, s, t):
    p = ModelParams(x, u)
    z, w = np.exp(1j * s), np.exp(1j * t)
    P = char_poly(p, z, w)
    scale = 1 + abs(p.a) ** 2 + abs(p.b) ** 2
    assert abs(P.imag) < 1e-12 * scale
    assert P.real > -1e-12 * scale
    assert abs(P - char_poly(p, 1 / z, 1 / w)) < 1e-12 * scale


@FAST
@given(xs)
def test_special_values_ordered(x):
    assert 0 < critical_anisotropy(x) < independent_anisotropy(x) < 1 < 1 / x


@FAST
@given(xs, st.floats(0.05, 0.99))
def test_dual_is_an_involution(x, frac):
    u = frac / x
    p = ModelParams(x, u)
    d = dual_anisotropy(p)
    assert d.u > 1 / x
    assert math.isclose(dual_anisotropy(d, strict=False).u, u, rel_tol=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.1, 0.6), st.floats(0.1, 0.9), st.sets(st.integers(0, 6), min_size=1, max_size=3))
def test_particle_patterns_form_a_distribution(x, u, sites):
    p = ModelParams(x, u)
    sites = sorted(sites)
    probs = [particle_probability(p, sites, list(pat)) for pat in itertools.product([True, False], repeat=len(sites))]
    assert all(-1e-9 <= v <= 1 + 1e-9 for v in probs)
    assert math.isclose(sum(probs), 1.0, abs_tol=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([-1.5, -1.0, 0.0, 0.5, 2.0]),
       st.lists(st.floats(0, 3), min_size=1, max_size=4, unique=True))
def test_m_point_nonnegative_and_order_free(g, pts):
    if len(pts) > 1 and np.min(np.diff(np.sort(pts))) < 1e-3:
        return
    v = m_point_correlation(g, pts)
    assert v >= -1e-9
    assert math.isclose(v, m_point_correlation(g, pts[::-1]), rel_tol=1e-12, abs_tol=1e-15)


@FAST
@given(arrays(np.int8, (6, 6), elements=st.sampled_from([-1, 1])))
def test_spin_fields_map_to_matchings(spins):
    f = SpinField(6, spins)
    a, b = spins_to_dimers(f), spins_to_dimers(SpinField(6, (-spins).astype(np.int8)))
    assert matching_defects(a) == 0
    assert np.array_equal(a.a, b.a) and np.array_equal(a.b_left, b.b_left) and np.array_equal(a.b_right, b.b_right)


@FAST
@given(st.integers(0, 2 ** 63), st.integers(0, 2 ** 40), st.lists(st.integers(0, 2 ** 40), min_size=1, max_size=50))
def test_counter_uniforms_pure(seed, stream, sites):
    a = counter_uniforms(seed, stream, sites)
    assert np.all((0 <= a) & (a < 1))
    assert np.array_equal(a, counter_uniforms(seed, stream, sites))
    assert np.array_equal(a[::-1], counter_uniforms(seed, stream, sites[::-1]))


@FAST
@given(arrays(np.float64, st.integers(40, 400), elements=st.floats(-1e3, 1e3)),
       st.floats(-10, 10).filter(lambda v: abs(v) > 1e-3), st.floats(-100, 100))
def test_estimate_affine_equivariance(v, a, b):
    r, s = estimate(v), estimate(a * v + b)
    tol = 1e-9 * (1 + abs(b) + abs(a) * np.abs(v).max())
    assert abs(s.mean - (a * r.mean + b)) < tol
    assert abs(s.se - abs(a) * r.se) < tol
    assert r.se >= 0


finite = st.floats(-10, 10, allow_nan=False).map(lambda v: round(v, 6))


@FAST
@given(st.sampled_from(["phase", "kernel", "simulate"]), st.lists(finite, max_size=4),
       st.lists(st.one_of(finite, st.sampled_from(["u_c", "u_i"])), max_size=4),
       st.integers(1, 200).map(lambda v: 2 * v), st.integers(0, 2 ** 31), st.booleans())
def test_run_config_round_trip(sub, x, u, L, seed, svg):
    cfg = RunConfig(sub, x=x, u=u, L=L, seed=seed, svg=svg)
    assert RunConfig.from_json(cfg.to_json()) == cfg


@FAST
@given(st.lists(st.floats(-5, 5).map(lambda v: round(v, 4)), min_size=1, max_size=6))
def test_parse_grid_lists(vals):
    assert parse_grid(",".join(repr(v) for v in vals)) == vals
