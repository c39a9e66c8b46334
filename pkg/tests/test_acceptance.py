"""Acceptance runs at their stated tolerances.

Each test prints one PASS/FAIL line; the lines are repeated in a summary
section at the end of the pytest run.  Full-size runs carry the ``slow``
mark and take minutes each.
"""

import math

import pytest

from nested_ising import checks

from conftest import ACCEPTANCE_LINES


def report(result, budget_s=None):
    line = result.line()
    if budget_s is not None and result.seconds > budget_s:
        line = line.replace("PASS", "FAIL", 1) + f" over the {budget_s:g} s budget"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert result.passed, line
    if budget_s is not None:
        assert result.seconds <= budget_s, line


def test_oracle_equivalence():
    report(checks.check_oracle(n_configs=5, steps=50, tol=1e-11), budget_s=30)


@pytest.mark.slow
def test_unitarity():
    report(checks.check_unitarity(steps=4000, tol=1e-9), budget_s=300)


@pytest.mark.slow
def test_purity_trend_full_scale():
    report(checks.check_purity_trend(checks.FULL_LAYOUT, n_realizations=10, min_gap=0.05))


def test_purity_trend_desk_scale():
    report(checks.check_purity_trend(checks.DESK_LAYOUT, n_realizations=10, min_gap=None),
           budget_s=120)


def test_gamma_periodicity():
    report(checks.check_periodicity(gamma=0.3, tol=1e-10))


def test_dephasing_conservation():
    report(checks.check_dephasing_conservation(steps=1000, tol=1e-10))


@pytest.mark.slow
def test_far_environment_decoupling():
    report(checks.check_far_decoupling(tol=1e-12))


@pytest.mark.slow
def test_lambda_squared_law():
    report(checks.check_lambda_law(1.7, 2.3))


@pytest.mark.slow
def test_gamma_prime_collapse():
    report(checks.check_gamma_prime_collapse(gamma_prime=math.pi / 4, tol=0.05))


@pytest.mark.slow
def test_sudden_death():
    report(checks.check_sudden_death(t_max=4000))


@pytest.mark.slow
def test_unital_region():
    report(checks.check_unital_region(min_fraction=0.99, tol=0.02))


def test_measure_examples():
    report(checks.check_measure_examples(tol=1e-10))


@pytest.mark.slow
def test_far_coupling_control():
    report(checks.check_far_coupling(tol=0.01))


def test_determinism():
    report(checks.check_determinism())
