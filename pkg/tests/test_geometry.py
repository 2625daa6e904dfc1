import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from discrete_sampler.exceptions import DomainError, InvalidArgumentError, PositivityError, UnsupportedMethodError
from discrete_sampler.geometry import (
    METHOD_NAMES,
    f_divergence,
    hamiltonian,
    kinetic_energy,
    log_mean,
    log_mean_derivative,
    logz_estimate_error,
    method_spec,
    mobility_derivative,
    mobility_eval,
    onsager_matrix,
    potential,
    potential_grad,
    potential_report,
)
from discrete_sampler.graph_model import TargetDistribution, build_problem, make_cycle, make_two_loop
from discrete_sampler.validation import fd_gradient


def _interior(n, rng):
    return rng.dirichlet(np.full(n, 2.0)) * 0.9 + 0.1 / n


def test_log_mean_values():
    assert log_mean(1.0, 1.0) == 1.0
    assert log_mean(math.e, 1.0) == pytest.approx(math.e - 1, rel=1e-15)
    assert log_mean(2.0, 2.0 * (1 + 1e-14)) == pytest.approx(2.0, rel=1e-13)
    assert log_mean(2.0, 2.0 * (1 + 1e-14)) == 2.0
    assert log_mean(2.0 * (1 + 1e-14), 2.0) == 2.0


def test_log_mean_bounds_and_symmetry(rng):
    x = rng.uniform(1e-6, 1e6, 2000)
    y = rng.uniform(1e-6, 1e6, 2000)
    theta = log_mean(x, y)
    assert np.all(theta >= np.minimum(x, y) * (1 - 1e-14))
    assert np.all(theta <= np.maximum(x, y) * (1 + 1e-14))
    assert np.array_equal(theta, log_mean(y, x))


def test_log_mean_rejects_nonpositive():
    with pytest.raises(DomainError):
        log_mean(0.0, 1.0)
    with pytest.raises(DomainError):
        mobility_eval('log_mean', -1.0, 1.0)


@pytest.mark.parametrize('x, y', [(3.0, 2.0), (0.2, 5.0), (1.0 + 1e-6, 1.0), (7.0, 7.0)])
def test_log_mean_derivative_matches_finite_differences(x, y):
    h = 1e-6 * x
    numeric = (log_mean(x + h, y) - log_mean(x - h, y)) / (2 * h)
    assert log_mean_derivative(x, y) == pytest.approx(float(numeric), rel=1e-6)


def test_mobility_eval_and_derivative():
    assert mobility_eval('uniform', 0.3, 7.2) == 1.0
    assert mobility_eval('log_mean', math.e, 1.0) == pytest.approx(math.e - 1)
    assert mobility_derivative('uniform', 0.3, 7.2) == 0.0
    assert mobility_derivative('log_mean', 1.0, 1.0) == pytest.approx(0.5)
    with pytest.raises(InvalidArgumentError):
        mobility_eval('harmonic', 1.0, 2.0)


def test_method_taxonomy():
    assert method_spec('chi_squared').mobility.variant == 'uniform'
    assert method_spec('kl').mobility.variant == 'log_mean'
    assert method_spec('log_fisher').potential_kind == 'fisher'
    assert method_spec('con_fisher').constant_onsager
    assert not method_spec('chi_squared').requires_positive_density
    with pytest.raises(UnsupportedMethodError):
        method_spec('hamiltonian_mc')


def test_con_fisher_theta_validation():
    with pytest.raises(InvalidArgumentError):
        method_spec('con_fisher', [[1.0, 2.0], [3.0, 1.0]])
    with pytest.raises(InvalidArgumentError):
        method_spec('con_fisher', [[1.0, 0.0], [0.0, 1.0]])


@pytest.mark.parametrize('size', [2, 4])
def test_con_fisher_theta_must_match_graph(size, c3_problem):
    theta = np.ones((size, size))
    with pytest.raises(InvalidArgumentError, match='3 states'):
        method_spec('con_fisher', theta, n=3)
    with pytest.raises(InvalidArgumentError, match='theta has shape'):
        onsager_matrix(method_spec('con_fisher', theta), c3_problem.weights, c3_problem.pi, c3_problem.pi)
    assert method_spec('con_fisher', np.ones((3, 3)), n=3).mobility.theta.shape == (3, 3)


@pytest.mark.parametrize('name', METHOD_NAMES)
def test_onsager_matrix_is_psd_laplacian(name, two_loop_problem, rng):
    p = _interior(two_loop_problem.n, rng)
    K = onsager_matrix(method_spec(name), two_loop_problem.weights, p, two_loop_problem.pi)
    assert_allclose(K, K.T, atol=1e-15)
    assert_allclose(K.sum(axis=1), 0.0, atol=1e-14)
    eigenvalues = np.linalg.eigvalsh(K)
    assert eigenvalues[0] > -1e-12
    assert eigenvalues[1] > 1e-8
    for x in rng.normal(size=(100, two_loop_problem.n)):
        assert x @ K @ x >= -1e-12


def test_onsager_matrix_at_target_is_minus_omega(c3_problem):
    for name in ('chi_squared', 'kl', 'log_fisher'):
        K = onsager_matrix(method_spec(name), c3_problem.weights, c3_problem.pi, c3_problem.pi)
        assert_allclose(K, -c3_problem.omega, atol=1e-15)


def test_onsager_matrix_rejects_zero_density(c3_problem):
    with pytest.raises(PositivityError):
        onsager_matrix(method_spec('kl'), c3_problem.weights, np.array([1.0, 0.0, 0.0]), c3_problem.pi)


def test_log_methods_ignore_normalizing_constant(rng):
    weights = [5.0, 1.0, 2.0, 0.5, 0.5, 3.0, 1.0, 4.0]
    g = make_two_loop((3, 3), 2)
    p = _interior(8, rng)
    for c in (10.0, 0.1):
        base = build_problem(g, TargetDistribution.from_weights(weights))
        scaled = build_problem(g, TargetDistribution.from_weights(np.array(weights) * c))
        for name in ('kl', 'log_fisher'):
            method = method_spec(name)
            assert_allclose(onsager_matrix(method, scaled.weights, p, scaled.pi),
                            onsager_matrix(method, base.weights, p, base.pi), rtol=1e-13)
            assert_allclose(potential_grad(method, p, scaled.pi, scaled.weights),
                            potential_grad(method, p, base.pi, base.weights), rtol=1e-12, atol=1e-13)


def test_chi_squared_potential_by_hand():
    g = make_cycle(3)
    problem = build_problem(g, TargetDistribution.from_weights([1.0, 1.0, 1.0]))
    p = np.array([0.5, 0.25, 0.25])
    assert potential(method_spec('chi_squared'), p, problem.pi, problem.weights) == pytest.approx(0.0625)
    assert f_divergence('chi2', [0.75, 0.25], [0.5, 0.5]) == pytest.approx(1 / 16)


def test_kl_divergence_by_hand():
    assert f_divergence('kl', [1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2))
    assert f_divergence('kl', [0.5, 0.5], [0.5, 0.5]) == 0.0
    with pytest.raises(InvalidArgumentError):
        f_divergence('hellinger', [0.5, 0.5], [0.5, 0.5])


@pytest.mark.parametrize('name', METHOD_NAMES)
def test_potential_and_gradient_vanish_at_target(name, two_loop_problem):
    method = method_spec(name)
    pi = two_loop_problem.pi
    report = potential_report(method, pi, pi, two_loop_problem.weights)
    assert report.value == pytest.approx(0.0, abs=1e-15)
    assert_allclose(report.gradient, 0.0, atol=1e-14)


@pytest.mark.parametrize('name', METHOD_NAMES)
def test_potential_is_positive_away_from_target(name, two_loop_problem, rng):
    method = method_spec(name)
    for _ in range(20):
        p = _interior(two_loop_problem.n, rng)
        assert potential(method, p, two_loop_problem.pi, two_loop_problem.weights) > 0


@pytest.mark.parametrize('name', METHOD_NAMES)
def test_gradient_matches_finite_differences(name, two_loop_problem, rng):
    method = method_spec(name)
    pi, weights = two_loop_problem.pi, two_loop_problem.weights
    for _ in range(10):
        p = _interior(two_loop_problem.n, rng)
        numeric = fd_gradient(lambda x: potential(method, x, pi, weights), p)
        analytic = potential_grad(method, p, pi, weights)
        numeric -= numeric.mean()
        analytic -= analytic.mean()
        assert np.linalg.norm(analytic - numeric) <= 1e-5 * max(1.0, np.linalg.norm(numeric))


def test_chi_squared_gradient_is_exact_flat_derivative(c3_problem):
    p = np.array([0.5, 0.3, 0.2])
    assert_allclose(potential_grad(method_spec('chi_squared'), p, c3_problem.pi, c3_problem.weights),
                    p / c3_problem.pi - 1.0)


@pytest.mark.parametrize('name', ['kl', 'log_fisher', 'con_fisher'])
def test_log_potentials_reject_zero_density(name, c3_problem):
    p = np.array([1.0, 0.0, 0.0])
    with pytest.raises(DomainError):
        potential(method_spec(name), p, c3_problem.pi, c3_problem.weights)
    with pytest.raises(DomainError):
        potential_grad(method_spec(name), p, c3_problem.pi, c3_problem.weights)


def test_chi_squared_potential_allows_boundary(c3_problem):
    p = np.array([1.0, 0.0, 0.0])
    assert potential(method_spec('chi_squared'), p, c3_problem.pi, c3_problem.weights) > 0


@pytest.mark.parametrize('name', METHOD_NAMES)
def test_hamiltonian_matches_double_sum(name, c3_problem, rng):
    method = method_spec(name)
    pi, weights = c3_problem.pi, c3_problem.weights
    p = _interior(3, rng)
    psi = rng.normal(size=3)
    K = onsager_matrix(method, weights, p, pi)
    brute = 0.0
    for i in range(3):
        for j in range(3):
            if i != j:
                brute += 0.25 * (-K[i, j]) * (psi[i] - psi[j]) ** 2
    assert kinetic_energy(method, p, psi, weights, pi) == pytest.approx(brute, rel=1e-12)
    assert kinetic_energy(method, p, psi, weights, pi) == pytest.approx(0.5 * psi @ K @ psi, rel=1e-10)
    assert hamiltonian(method, p, psi, weights, pi) == pytest.approx(brute + potential(method, p, pi, weights), rel=1e-12)
    assert hamiltonian(method, p, np.full(3, 2.5), weights, pi) == pytest.approx(potential(method, p, pi, weights))
    assert hamiltonian(method, pi, np.zeros(3), weights, pi) == pytest.approx(0.0, abs=1e-15)


def test_logz_estimate_error():
    assert logz_estimate_error([0.5, 0.5], [1.0, 1.0], 2.0) == pytest.approx(0.0, abs=1e-15)
    weights = np.array([1.0, 3.0, 6.0])
    pi = weights / weights.sum()
    assert logz_estimate_error(pi, weights, weights.sum()) == pytest.approx(0.0, abs=1e-14)
    p = np.full(3, 1 / 3)
    assert logz_estimate_error(p, weights, weights.sum()) == pytest.approx(f_divergence('kl', p, pi), rel=1e-12)
    with pytest.raises(DomainError):
        logz_estimate_error([1.0, 0.0], [1.0, 1.0], 2.0)
