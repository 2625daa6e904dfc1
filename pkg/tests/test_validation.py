import numpy as np
import pytest

from discrete_sampler.geometry import potential_grad
from discrete_sampler.validation import (
    InvariantCheck,
    check_eigen_map,
    check_mass_conservation,
    check_q_spectrum,
    random_reversible_problem,
    run_invariant_suite,
)

SUITE_NAMES = [
    'gradient_finite_difference',
    'onsager_psd',
    'q_simple_zero',
    'momentum_rate_identity',
    'warm_start_identity',
    'eigen_map',
    'mass_conservation',
    'hessian_finite_difference',
]


def test_random_problems_are_reversible(rng):
    for n in (3, 5, 8):
        problem = random_reversible_problem(n, rng)
        flux = problem.pi[:, None] * problem.Q
        assert np.abs(flux - flux.T).max() < 1e-12
        assert problem.n == n


def test_suite_passes_on_default_seed():
    checks = run_invariant_suite(seed=0, trials=6)
    assert [check.name for check in checks] == SUITE_NAMES
    failed = [check for check in checks if not check.passed]
    assert not failed, failed


@pytest.mark.slow
def test_suite_passes_with_configured_trials():
    assert all(check.passed for check in run_invariant_suite(seed=1, trials=20))


@pytest.mark.slow
def test_mass_is_conserved_over_long_runs(rng):
    problems = [random_reversible_problem(6, rng) for _ in range(2)]
    result = check_mass_conservation(problems, seed=0, steps=10000)
    assert result.passed, result.detail


def test_suite_catches_a_wrong_gradient():
    def flipped(method, p, pi, weights):
        return -potential_grad(method, p, pi, weights)

    checks = {check.name: check for check in run_invariant_suite(seed=0, trials=3, gradient_fn=flipped)}
    assert not checks['gradient_finite_difference'].passed
    assert checks['onsager_psd'].passed


def test_single_checks(rng):
    problems = [random_reversible_problem(4, rng) for _ in range(3)]
    assert check_q_spectrum(problems).passed
    result = check_eigen_map(problems, rng)
    assert isinstance(result, InvariantCheck)
    assert result.passed


def test_outcomes_do_not_depend_on_seed():
    outcomes = [[(check.name, check.passed) for check in run_invariant_suite(seed=seed, trials=4)] for seed in (0, 9)]
    assert outcomes[0] == outcomes[1]
