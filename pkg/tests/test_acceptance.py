"""One test per acceptance criterion; each runs the shared check at tol_scale = 1."""
import json

import pytest

from fisherdimer.validation import CHECKS, run_check

BY_CRITERION = {c.criterion: c for c in CHECKS}


def _assert_check(n):
    r = run_check(BY_CRITERION[n])
    assert r.passed, json.dumps(r.details, indent=1, sort_keys=True)


def test_criterion_01_kasteleyn_consistency():
    _assert_check(1)


def test_criterion_02_criticality_location():
    _assert_check(2)


def test_criterion_03_independent_point_closed_forms():
    _assert_check(3)


def test_criterion_04_two_route_expectations():
    _assert_check(4)


def test_criterion_05_low_temperature_laws():
    _assert_check(5)


def test_criterion_06_duality():
    _assert_check(6)


def test_criterion_07_kernel_closed_forms():
    _assert_check(7)


def test_criterion_08_correlation_lengths():
    _assert_check(8)


@pytest.mark.slow
def test_criterion_09_monte_carlo_vs_exact():
    _assert_check(9)


@pytest.mark.slow
def test_criterion_10_poisson_structure():
    _assert_check(10)


@pytest.mark.slow
def test_criterion_11_random_walk_steps():
    _assert_check(11)


def test_criterion_12_pfaffian_engine():
    _assert_check(12)


@pytest.mark.parametrize("n", sorted(c.criterion for c in CHECKS if c.quick))
def test_injected_fault_fails(n):
    assert not run_check(BY_CRITERION[n], tol_scale=0.0).passed
