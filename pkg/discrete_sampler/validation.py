from dataclasses import dataclass
from typing import Callable, List, Optional

import networkx as nx
import numpy as np

from discrete_sampler import logger
from discrete_sampler.dynamics import DampingSchedule, IntegrationOptions, integrate, init_momentum, p_rhs
from discrete_sampler.geometry import METHOD_NAMES, method_spec, onsager_matrix, potential, potential_grad
from discrete_sampler.graph_model import SamplingProblem, StateGraph, TargetDistribution, build_problem
from discrete_sampler.particles import JumpConfig, build_psi_rate_matrix, run_mh_jump
from discrete_sampler.spectral import (
    alpha_star,
    chi_system_matrix,
    confisher_hessian,
    confisher_hessian_at_pi,
    l_spectrum,
    MAP_TOL,
    map_check,
    q_spectrum,
)

GRADIENT_RTOL = 1e-5
HESSIAN_RTOL = 1e-4
FD_STEP = 1e-6
DAMPINGS_PER_CHAIN = 5
MASS_STEPS = 50
MASS_TOL = 1e-10

GradientFn = Callable[..., np.ndarray]


@dataclass(frozen=True)
class InvariantCheck:
    name: str
    passed: bool
    detail: str = ''


def random_reversible_problem(n: int, rng: np.random.Generator) -> SamplingProblem:
    """Random connected graph on n states with a random positive target."""
    g = nx.gnp_random_graph(n, 0.4, seed=int(rng.integers(2 ** 31)))
    nx.add_path(g, [int(i) for i in rng.permutation(n)])
    target = TargetDistribution.from_weights(rng.uniform(0.2, 1.0, n))
    return build_problem(StateGraph(g, kind='random'), target)


def random_interior_density(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.dirichlet(np.full(n, 2.0)) * 0.9 + 0.1 / n


def _zero_sum(v: np.ndarray) -> np.ndarray:
    return v - v.mean()


def _relative_gap(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / max(1.0, np.linalg.norm(b)))


def fd_gradient(fn: Callable[[np.ndarray], float], p: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    grad = np.zeros_like(p)
    for i in range(p.size):
        e = np.zeros_like(p)
        e[i] = h
        grad[i] = (fn(p + e) - fn(p - e)) / (2 * h)
    return grad


def fd_jacobian(fn: Callable[[np.ndarray], np.ndarray], p: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    columns = []
    for i in range(p.size):
        e = np.zeros_like(p)
        e[i] = h
        columns.append((fn(p + e) - fn(p - e)) / (2 * h))
    return np.column_stack(columns)


def check_gradients(problems: List[SamplingProblem], rng, gradient_fn: GradientFn = potential_grad) -> InvariantCheck:
    worst = 0.0
    for problem in problems:
        p = random_interior_density(problem.n, rng)
        for name in METHOD_NAMES:
            method = method_spec(name)
            numeric = fd_gradient(lambda x: potential(method, x, problem.pi, problem.weights), p)
            analytic = gradient_fn(method, p, problem.pi, problem.weights)
            worst = max(worst, _relative_gap(_zero_sum(analytic), _zero_sum(numeric)))
    return InvariantCheck('gradient_finite_difference', worst < GRADIENT_RTOL, f'worst relative error {worst:.2e}')


def check_onsager_psd(problems: List[SamplingProblem], rng) -> InvariantCheck:
    worst = 0.0
    for problem in problems:
        p = random_interior_density(problem.n, rng)
        for name in METHOD_NAMES:
            K = onsager_matrix(method_spec(name), problem.weights, p, problem.pi)
            eigenvalues = np.linalg.eigvalsh(K)
            scale = max(1.0, eigenvalues.max())
            worst = max(worst, -eigenvalues.min() / scale, np.abs(K - K.T).max(), np.abs(K.sum(axis=1)).max())
    return InvariantCheck('onsager_psd', worst < 1e-10, f'worst violation {worst:.2e}')


def check_q_spectrum(problems: List[SamplingProblem]) -> InvariantCheck:
    worst = 0.0
    try:
        for problem in problems:
            symmetric = q_spectrum(problem.Q, problem.pi)
            alpha_star(symmetric)
            general = np.sort(np.linalg.eigvals(problem.Q).real)[::-1]
            worst = max(worst, np.abs(symmetric - general).max())
    except Exception as e:
        return InvariantCheck('q_simple_zero', False, str(e))
    return InvariantCheck('q_simple_zero', worst < 1e-8, f'symmetric vs general solver {worst:.2e}')


def check_psi_rate_identity(problems: List[SamplingProblem], rng) -> InvariantCheck:
    worst = 0.0
    for problem in problems:
        p = random_interior_density(problem.n, rng)
        psi = rng.normal(size=problem.n)
        for name in METHOD_NAMES:
            method = method_spec(name)
            Q = build_psi_rate_matrix(method, p, psi, problem.weights, problem.pi).Q
            worst = max(worst, np.abs(p @ Q - p_rhs(method, p, psi, problem.weights, problem.pi)).max())
    return InvariantCheck('momentum_rate_identity', worst < 1e-12, f'max |p Q - psi K| {worst:.2e}')


def check_warm_start_identity(problems: List[SamplingProblem], rng) -> InvariantCheck:
    worst = 0.0
    for problem in problems:
        p = random_interior_density(problem.n, rng)
        for name in METHOD_NAMES:
            method = method_spec(name)
            velocity = p_rhs(method, p, init_momentum(method, p, problem.pi), problem.weights, problem.pi)
            worst = max(worst, np.abs(velocity - p @ problem.Q).max())
    return InvariantCheck('warm_start_identity', worst < 1e-12, f'max |psi K - p Q| {worst:.2e}')


def check_eigen_map(problems: List[SamplingProblem], rng) -> InvariantCheck:
    for problem in problems:
        q_eigenvalues = q_spectrum(problem.Q, problem.pi)
        for d in rng.uniform(0.0, 3.0, DAMPINGS_PER_CHAIN):
            d = float(d)
            eigenvalues = l_spectrum(chi_system_matrix(problem.pi, problem.omega, d))
            for mu in eigenvalues:
                if not map_check(mu, d, problem.Q):
                    return InvariantCheck('eigen_map', False, f'mu={mu:.6g} with d={d:.4g} does not map into spec(Q)')
            for alpha in q_eigenvalues:
                root = np.sqrt(complex(d * d + 4 * alpha))
                for mu in ((-d + root) / 2, (-d - root) / 2):
                    if np.abs(eigenvalues - mu).min() > MAP_TOL * max(1.0, abs(mu)):
                        return InvariantCheck('eigen_map', False, f'root {mu:.6g} of alpha={alpha:.6g} missing from spec(L)')
    return InvariantCheck('eigen_map', True, f'{len(problems)} chains x {DAMPINGS_PER_CHAIN} dampings')


def check_mass_conservation(problems: List[SamplingProblem], seed: int, steps: int = MASS_STEPS) -> InvariantCheck:
    worst = 0.0
    schedule = DampingSchedule.constant(1.0)
    for problem in problems:
        p0 = np.full(problem.n, 1.0 / problem.n)
        for name in ('chi_squared', 'log_fisher'):
            traj = integrate(p0, method_spec(name), schedule, 0.01, steps, problem, IntegrationOptions())
            worst = max(worst, abs(traj.final_density.sum() - 1.0))
        _, ensemble = run_mh_jump(JumpConfig(particles=500, dt=0.1, iterations=20, seed=seed), problem)
        if ensemble.total != 500:
            return InvariantCheck('mass_conservation', False, f'jump total {ensemble.total} != 500')
    return InvariantCheck('mass_conservation', worst < MASS_TOL, f'max |sum p - 1| {worst:.2e}')


def check_hessian(problems: List[SamplingProblem], rng) -> InvariantCheck:
    worst = 0.0
    worst_at_pi = 0.0
    method = method_spec('con_fisher')
    for problem in problems:
        p = random_interior_density(problem.n, rng)
        numeric = fd_jacobian(lambda x: potential_grad(method, x, problem.pi, problem.weights), p)
        analytic = confisher_hessian(p, problem.pi, problem.weights)
        worst = max(worst, _relative_gap(analytic, numeric))
        K = onsager_matrix(method, problem.weights, problem.pi, problem.pi)
        at_pi = confisher_hessian(problem.pi, problem.pi, problem.weights)
        worst_at_pi = max(worst_at_pi, np.abs(at_pi - confisher_hessian_at_pi(problem.pi, K)).max() / np.abs(at_pi).max())
    passed = worst < HESSIAN_RTOL and worst_at_pi < 1e-12
    return InvariantCheck('hessian_finite_difference', passed, f'relative error {worst:.2e}, at pi {worst_at_pi:.2e}')


def run_invariant_suite(
        seed: int = 0,
        trials: int = 20,
        max_states: int = 8,
        gradient_fn: Optional[GradientFn] = None,
        mass_steps: int = MASS_STEPS,
    ) -> List[InvariantCheck]:
    """
    Fast property checks on random reversible chains.

    ``gradient_fn`` replaces the analytic potential gradient, which lets a
    caller confirm that a broken gradient is caught.
    ``mass_steps`` sets the length of the mass conservation runs.
    """
    rng = np.random.default_rng(seed)
    problems = [random_reversible_problem(int(rng.integers(3, max_states + 1)), rng) for _ in range(trials)]
    checks = [
        check_gradients(problems, rng, gradient_fn or potential_grad),
        check_onsager_psd(problems, rng),
        check_q_spectrum(problems),
        check_psi_rate_identity(problems, rng),
        check_warm_start_identity(problems, rng),
        check_eigen_map(problems, rng),
        check_mass_conservation(problems[:3], seed, mass_steps),
        check_hessian(problems, rng),
    ]
    for check in checks:
        log = logger.info if check.passed else logger.error
        log(f'{check.name}: {"PASS" if check.passed else "FAIL"} ({check.detail})')
    return checks
