import itertools
import math

import numpy as np
import pytest

from fisherdimer.errors import DomainError, NotAntisymmetric, OddDimension
from fisherdimer.lattice import ModelParams, critical_anisotropy, dual_anisotropy, independent_anisotropy
from fisherdimer.pfaffian import (a_edge, b_edge_up_left, b_edge_up_right, conditional_step_probs,
                                  edge_set_probability, pair_covariance, particle_probability, pfaffian,
                                  pfaffian_recursive)


def random_antisym(rng, n, complex_=False):
    A = rng.standard_normal((n, n))
    if complex_:
        A = A + 1j * rng.standard_normal((n, n))
    return A - A.T


def at_ui(x):
    return ModelParams(x, independent_anisotropy(x))


def at_uc(x):
    return ModelParams(x, critical_anisotropy(x))


# ---------------------------------------------------------------- Pfaffian engine

def test_pfaffian_2x2():
    assert pfaffian(np.array([[0.0, 2.5], [-2.5, 0.0]])) == 2.5


def test_pfaffian_4x4():
    a, b, c, d, e, f = 1.3, -0.7, 2.1, 0.4, -1.9, 0.8
    A = np.array([[0, a, b, c], [-a, 0, d, e], [-b, -d, 0, f], [-c, -e, -f, 0]])
    assert pfaffian(A) == pytest.approx(a * f - b * e + c * d, rel=1e-14)


def test_pfaffian_empty():
    assert pfaffian(np.zeros((0, 0))) == 1


@pytest.mark.parametrize("complex_", [False, True])
def test_pfaffian_squared_is_det(complex_):
    rng = np.random.default_rng(5)
    for n in (2, 6, 10, 16, 20):
        A = random_antisym(rng, n, complex_)
        pf = pfaffian(A)
        d = np.linalg.det(A)
        assert abs(pf * pf - d) <= 1e-9 * abs(d)


def test_pfaffian_matches_recursive_oracle():
    rng = np.random.default_rng(6)
    for _ in range(100):
        n = int(rng.choice([2, 4, 6, 8]))
        A = random_antisym(rng, n, complex_=bool(rng.integers(2)))
        a, b = pfaffian(A), pfaffian_recursive(A)
        assert abs(a - b) <= 1e-10 * max(1.0, abs(b))


def test_pfaffian_singular_matrix():
    A = np.zeros((4, 4))
    A[0, 1], A[1, 0] = 1.0, -1.0
    assert pfaffian(A) == 0


def test_pfaffian_errors():
    with pytest.raises(OddDimension):
        pfaffian(np.zeros((3, 3)))
    A = np.array([[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(NotAntisymmetric):
        pfaffian(A)


# ---------------------------------------------------------------- edge probabilities

def test_a_edge_independent_point():
    x = 0.1
    assert edge_set_probability(at_ui(x), [a_edge(0)]) == pytest.approx(1 / (1 + x), abs=1e-10)
    assert edge_set_probability(at_ui(x), [a_edge(0)]) == pytest.approx(0.909091, abs=1e-6)


def test_b_edges_independent_point():
    x = 0.1
    want = 0.5 - math.sqrt(1 - x) / (2 * math.sqrt(1 + x))
    assert want == pytest.approx(0.047733, abs=1e-6)
    for e in (b_edge_up_left(), b_edge_up_right()):
        assert edge_set_probability(at_ui(x), [e]) == pytest.approx(want, abs=1e-10)


def test_far_b_edges_factorize():
    p = ModelParams(0.1, 0.3)
    e1, e2 = b_edge_up_left(), b_edge_up_left(30, -30)
    joint = edge_set_probability(p, [e1, e2])
    prod = edge_set_probability(p, [e1]) * edge_set_probability(p, [e2])
    assert abs(joint - prod) < 1e-12


def test_edge_set_requires_distinct_vertices():
    with pytest.raises(DomainError):
        edge_set_probability(ModelParams(0.3, 0.3), [a_edge(0), a_edge(0)])


# ---------------------------------------------------------------- particle probabilities

def test_particle_independent_point():
    x = 0.1
    p = at_ui(x)
    assert particle_probability(p, [0], [True]) == pytest.approx(x / (1 + x), abs=1e-10)
    for n in (1, 2, 5):
        assert particle_probability(p, [0, n], [True, True]) == pytest.approx(x * x / (1 + x) ** 2, abs=1e-10)


def test_particle_empty_pattern():
    assert particle_probability(ModelParams(0.3, 0.3), [], []) == 1.0


def test_inclusion_exclusion_consistency():
    p = ModelParams(0.3, 0.5)
    sites = [0, 1, 3, 4]
    for pattern in itertools.product([True, False], repeat=3):
        both = sum(particle_probability(p, sites, list(pattern) + [last]) for last in (True, False))
        assert both == pytest.approx(particle_probability(p, sites[:3], list(pattern)), abs=1e-9)


def test_pattern_probabilities_sum_to_one():
    p = ModelParams(0.4, 0.6)
    total = sum(particle_probability(p, [0, 1, 2], list(pat)) for pat in itertools.product([True, False], repeat=3))
    assert total == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("u", [0.3, 0.45])
def test_duality_same_row_patterns(u):
    p = ModelParams(0.2, u)
    q = dual_anisotropy(p)
    rng = np.random.default_rng(int(u * 100))
    for _ in range(4):
        k = int(rng.integers(1, 4))
        sites = sorted(rng.choice(8, size=k, replace=False).tolist())
        present = rng.integers(2, size=k).astype(bool).tolist()
        assert particle_probability(p, sites, present) == pytest.approx(particle_probability(q, sites, present), abs=1e-8)


def test_probabilities_in_unit_interval():
    rng = np.random.default_rng(8)
    for x, u in ((0.1, 0.3), (0.3, 0.6), (0.5, 0.9), (0.2, critical_anisotropy(0.2))):
        p = ModelParams(x, u)
        for _ in range(3):
            sites = sorted(rng.choice(6, size=2, replace=False).tolist())
            v = particle_probability(p, sites, rng.integers(2, size=2).astype(bool).tolist())
            assert -1e-9 <= v <= 1 + 1e-9


# ---------------------------------------------------------------- critical-point pair statistics

def test_pair_covariance_example():
    assert abs(pair_covariance(at_uc(0.01), 5) - 4.674e-5) < 1e-8


def test_pair_covariance_matches_expansion_at_short_range():
    x = 0.01
    want = (1 - 4 / math.pi ** 2) * x * x - 8 / math.pi * x ** 3
    assert abs(pair_covariance(at_uc(x), 1) - want) < 1e-7


def test_pair_covariance_degenerate_separation():
    p = at_uc(0.01)
    p1 = particle_probability(p, [0], [True])
    # n = 0: the joint collapses to the single-site probability
    assert pair_covariance(p, 0) + p1 * p1 == pytest.approx(p1, rel=1e-12)


def test_pair_joint_decorrelates():
    p = at_uc(0.01)
    p1 = particle_probability(p, [0], [True])
    gaps = [abs(pair_covariance(p, n)) for n in (20, 60, 150)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 0.05 * p1 * p1


def test_pair_covariance_requires_critical():
    with pytest.raises(DomainError):
        pair_covariance(ModelParams(0.1, 0.3), 2)


def test_conditional_step_together():
    s = conditional_step_probs(at_uc(0.1), 10)
    assert abs(s.together - 0.28183) < 0.01


def test_conditional_step_apart():
    s = conditional_step_probs(at_uc(0.1), 10)
    assert abs(s.apart - 0.21817) < 0.01


def test_conditional_steps_sum_to_one():
    s = conditional_step_probs(at_uc(0.1), 10)
    assert abs(s.total() - 1) < 1e-2


def test_conditional_steps_small_separation_law():
    x = 0.001
    s = conditional_step_probs(at_uc(x), 3)
    assert abs(s.together - (0.25 + x / math.pi)) < 10 * x * x
    assert abs(s.apart - (0.25 - x / math.pi)) < 10 * x * x
    assert abs(s.both_left - 0.25) < 10 * x * x
    assert abs(s.both_right - 0.25) < 10 * x * x


def test_conditional_steps_validation():
    with pytest.raises(DomainError):
        conditional_step_probs(at_uc(0.1), 1)
