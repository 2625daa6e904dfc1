import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from discrete_sampler.exceptions import DetailedBalanceError, DomainError, InvalidArgumentError, NumericalRankError
from discrete_sampler.geometry import method_spec, potential_grad
from discrete_sampler.spectral import (
    alpha_star,
    chi2_lambda_bound,
    chi_system_matrix,
    confisher_hessian,
    confisher_hessian_at_pi,
    l_spectrum,
    map_check,
    mu_star,
    optimal_damping,
    predicted_rate,
    q_spectrum,
    rayleigh_lambda,
    spectral_report,
)
from discrete_sampler.validation import fd_jacobian, random_interior_density

TRIANGLE_LAPLACIAN = np.array([[2.0, -1.0, -1.0], [-1.0, 2.0, -1.0], [-1.0, -1.0, 2.0]])


def test_uniform_triangle_spectrum(triangle_uniform):
    q = q_spectrum(triangle_uniform.Q, triangle_uniform.pi)
    assert_allclose(q, [0.0, -1.5, -1.5], atol=1e-14)
    assert alpha_star(q) == pytest.approx(-1.5)


def test_reference_chains_have_known_gaps(c3_problem, two_loop_problem, hypercube_problem):
    assert alpha_star(q_spectrum(c3_problem.Q, c3_problem.pi)) == pytest.approx(-0.5044, abs=5e-4)
    assert alpha_star(q_spectrum(two_loop_problem.Q, two_loop_problem.pi)) == pytest.approx(-0.0379, abs=1e-3)
    assert alpha_star(q_spectrum(hypercube_problem.Q, hypercube_problem.pi)) == pytest.approx(-0.0468, abs=1e-3)


def test_q_spectrum_matches_general_solver(two_loop_problem):
    q = q_spectrum(two_loop_problem.Q, two_loop_problem.pi)
    general = np.sort(np.linalg.eigvals(two_loop_problem.Q).real)[::-1]
    assert_allclose(q, general, atol=1e-12)


def test_q_spectrum_rejects_irreversible_rates():
    Q = np.array([[-1.0, 1.0, 0.0], [0.0, -1.0, 1.0], [1.0, 0.0, -1.0]])
    with pytest.raises(DetailedBalanceError):
        q_spectrum(Q, np.full(3, 1 / 3))


@pytest.mark.parametrize('eigenvalues', [[0.0, 0.0, -1.0], [0.0, -1e-12, -2.0], [0.3, 0.0, -1.0]])
def test_alpha_star_needs_a_simple_zero(eigenvalues):
    with pytest.raises(NumericalRankError):
        alpha_star(eigenvalues)


def test_damping_formulas():
    assert optimal_damping(-1.0) == 2.0
    assert predicted_rate(-1.0) == -1.0
    assert optimal_damping(-0.0379) == pytest.approx(2 * math.sqrt(0.0379))
    for alpha in (0.0, 0.5):
        with pytest.raises(InvalidArgumentError):
            optimal_damping(alpha)
        with pytest.raises(InvalidArgumentError):
            predicted_rate(alpha)


def test_chi_system_matrix_two_states():
    pi = np.array([0.5, 0.5])
    omega = np.array([[-0.25, 0.25], [0.25, -0.25]])
    L = chi_system_matrix(pi, omega, 0.7)
    expected = np.array([
        [0.0, 0.0, -2.0, 0.0],
        [0.0, 0.0, 0.0, -2.0],
        [0.25, -0.25, -0.7, 0.0],
        [-0.25, 0.25, 0.0, -0.7],
    ])
    assert_allclose(L, expected)
    root = math.sqrt(3.51) / 2
    expected = np.sort_complex(np.array([0.0, -0.7, -0.35 - root * 1j, -0.35 + root * 1j]))
    assert_allclose(np.sort_complex(l_spectrum(L)), expected, atol=1e-12)


def test_every_l_eigenvalue_maps_into_q(c3_problem, two_loop_problem):
    for problem in (c3_problem, two_loop_problem):
        L = chi_system_matrix(problem.pi, problem.omega, 1.0)
        for mu in l_spectrum(L):
            assert map_check(mu, 1.0, problem.Q)
    assert not map_check(-0.3 + 0j, 1.0, c3_problem.Q)


def test_mu_star_prefers_real_on_ties():
    eigenvalues = np.array([0.0, -0.5 + 0.2j, -0.5 - 0.2j, -0.5 + 0.0j, -2.0])
    assert mu_star(eigenvalues) == -0.5
    assert mu_star(np.array([0.0, -1.0, -0.3])) == -0.3
    with pytest.raises(NumericalRankError):
        mu_star(np.array([0.0, 1e-12]))


def test_c3_report_at_recommended_damping(c3_problem):
    report = spectral_report(c3_problem)
    assert report.alpha_star == pytest.approx(-0.5044, abs=5e-4)
    assert report.recommended_d == pytest.approx(1.4204, abs=2e-3)
    assert report.damping == report.recommended_d
    assert report.mu_star == pytest.approx(-0.7102, abs=1e-3)
    assert report.predicted_rate == pytest.approx(-math.sqrt(-report.alpha_star))
    assert report.flags['gap_condition_holds']
    assert report.flags['mu_star_maps_into_q']
    assert report.lambda_rayleigh == pytest.approx(report.alpha_star ** 2, rel=1e-6)


def test_report_to_dict_renders_complex_pairs(c3_problem):
    data = spectral_report(c3_problem, d=1.0).to_dict()
    assert len(data['l_eigenvalues']) == 6
    assert all(len(pair) == 2 for pair in data['l_eigenvalues'])
    assert set(data['flags']) == {'gap_condition_holds', 'mu_star_is_real', 'mu_star_tie', 'mu_star_maps_into_q'}
    assert data['damping'] == 1.0


def test_report_flags_large_gap(triangle_uniform):
    report = spectral_report(triangle_uniform, d=3.0)
    assert not report.flags['gap_condition_holds']
    assert report.flags['mu_star_is_real']


def test_report_rejects_negative_damping(c3_problem):
    with pytest.raises(InvalidArgumentError):
        spectral_report(c3_problem, d=-1.0)


@pytest.mark.parametrize('d', [0.39, 0.6, 1.0])
def test_overdamped_flow_beats_mh_below_gap_plus_one(d, two_loop_problem):
    report = spectral_report(two_loop_problem, d=d)
    assert 2 * math.sqrt(-report.alpha_star) <= d < 1 - report.alpha_star
    assert report.mu_star < report.alpha_star


def test_damping_beyond_gap_plus_one_loses_to_mh(two_loop_problem):
    report = spectral_report(two_loop_problem, d=1.2)
    assert report.mu_star > report.alpha_star


def test_confisher_hessian_matches_finite_differences(two_loop_problem, rng):
    method = method_spec('con_fisher')
    pi, weights = two_loop_problem.pi, two_loop_problem.weights
    for _ in range(5):
        p = random_interior_density(8, rng)
        numeric = fd_jacobian(lambda x: potential_grad(method, x, pi, weights), p)
        analytic = confisher_hessian(p, pi, weights)
        assert np.linalg.norm(analytic - numeric) <= 1e-4 * max(1.0, np.linalg.norm(numeric))
        assert_allclose(analytic, analytic.T, rtol=1e-12, atol=1e-12)


def test_confisher_hessian_at_target(two_loop_problem):
    pi = two_loop_problem.pi
    K = -two_loop_problem.omega
    assert_allclose(confisher_hessian(pi, pi, two_loop_problem.weights), confisher_hessian_at_pi(pi, K), rtol=1e-12)


def test_confisher_hessian_uniform_target(triangle_uniform):
    K = -triangle_uniform.omega
    assert_allclose(confisher_hessian_at_pi(triangle_uniform.pi, K), 9 * K)
    with pytest.raises(DomainError):
        confisher_hessian(np.array([1.0, 0.0, 0.0]), triangle_uniform.pi, triangle_uniform.weights)


def test_rayleigh_of_laplacian_against_itself():
    assert rayleigh_lambda(TRIANGLE_LAPLACIAN, TRIANGLE_LAPLACIAN) == pytest.approx(9.0)


def test_rayleigh_matches_sampled_minimum(c3_problem, rng):
    K = -c3_problem.omega
    H = confisher_hessian_at_pi(c3_problem.pi, K)
    lam = rayleigh_lambda(K, H)
    psi = rng.normal(size=(20000, 3))
    psi -= psi.mean(axis=1, keepdims=True)
    KpsiT = psi @ K
    ratios = np.einsum('ij,jk,ik->i', KpsiT, H, KpsiT) / np.einsum('ij,ij->i', KpsiT, psi)
    assert ratios.min() >= lam * (1 - 1e-9)
    assert ratios.min() <= lam * 1.05


@pytest.mark.parametrize('fixture', ['c3_problem', 'two_loop_problem', 'hypercube_problem'])
def test_rayleigh_at_target_is_squared_gap(fixture, request):
    problem = request.getfixturevalue(fixture)
    report = spectral_report(problem)
    assert report.lambda_rayleigh == pytest.approx(report.alpha_star ** 2, rel=1e-6)


def test_rayleigh_needs_one_dimensional_kernel():
    K = np.zeros((4, 4))
    K[:2, :2] = [[1.0, -1.0], [-1.0, 1.0]]
    K[2:, 2:] = [[1.0, -1.0], [-1.0, 1.0]]
    with pytest.raises(NumericalRankError):
        rayleigh_lambda(K, K)


def test_chi2_lambda_bound(triangle_uniform):
    assert chi2_lambda_bound(triangle_uniform.pi, triangle_uniform.omega) == pytest.approx(1.5)
    assert chi2_lambda_bound(triangle_uniform.pi, 2 * triangle_uniform.omega) == pytest.approx(3.0)


@pytest.mark.slow
def test_lattice_rayleigh_is_positive(lattice_problem):
    report = spectral_report(lattice_problem)
    assert report.lambda_rayleigh > 0
    assert report.alpha_star < 0
    assert report.recommended_d == pytest.approx(2 * math.sqrt(-report.alpha_star))
