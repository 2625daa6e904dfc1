import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from discrete_sampler import logger
from discrete_sampler.exceptions import DetailedBalanceError, DomainError, InvalidArgumentError, NumericalRankError
from discrete_sampler.geometry import edge_conductances, method_spec
from discrete_sampler.graph_model import DETAILED_BALANCE_TOL, SamplingProblem, WeightMatrix

ZERO_TOL = 1e-10
MAP_TOL = 1e-8
MU_TIE_TOL = 1e-6
SVD_RTOL = 1e-12


@dataclass(frozen=True)
class SpectralReport:
    q_eigenvalues: np.ndarray
    alpha_star: float
    recommended_d: float
    l_eigenvalues: np.ndarray
    mu_star: float
    lambda_rayleigh: float
    damping: float
    predicted_rate: float
    mu_star_imag: float = 0.0
    chi2_lambda_bound: float = math.nan
    flags: Dict[str, bool] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'q_eigenvalues': [float(x) for x in self.q_eigenvalues],
            'alpha_star': self.alpha_star,
            'recommended_d': self.recommended_d,
            'damping': self.damping,
            'l_eigenvalues': [[float(z.real), float(z.imag)] for z in self.l_eigenvalues],
            'mu_star': self.mu_star,
            'mu_star_imag': self.mu_star_imag,
            'predicted_rate': self.predicted_rate,
            'lambda_rayleigh': self.lambda_rayleigh,
            'chi2_lambda_bound': self.chi2_lambda_bound,
            'flags': dict(self.flags),
        }


def q_spectrum(Q, pi) -> np.ndarray:
    """
    Eigenvalues of a reversible rate matrix, sorted descending.

    Under detailed balance diag(sqrt(pi)) Q diag(sqrt(pi))^-1 is symmetric,
    so a symmetric solver gives the (real) spectrum.
    """
    Q = np.asarray(Q, dtype=float)
    pi = np.asarray(pi, dtype=float)
    flux = pi[:, None] * Q
    asymmetry = np.abs(flux - flux.T).max()
    if asymmetry > DETAILED_BALANCE_TOL:
        logger.error(f'Detailed balance violated by {asymmetry:.3e}')
        raise DetailedBalanceError(f'Q is not reversible with respect to pi (max deviation {asymmetry:.3e})')
    root = np.sqrt(pi)
    S = root[:, None] * Q / root[None, :]
    eigenvalues = linalg.eigvalsh(0.5 * (S + S.T))
    return eigenvalues[::-1]


def alpha_star(q_eigenvalues: Sequence[float], tol: float = ZERO_TOL) -> float:
    """Largest negative eigenvalue; the zero eigenvalue must be simple."""
    eigenvalues = np.asarray(q_eigenvalues, dtype=float)
    negative = eigenvalues[eigenvalues < -tol]
    if negative.size != eigenvalues.size - 1:
        raise NumericalRankError(
            f'expected one zero eigenvalue and {eigenvalues.size - 1} negative ones, '
            f'found {eigenvalues.size - negative.size} above -{tol:g}'
        )
    return float(negative.max())


def chi_system_matrix(pi, omega, d: float) -> np.ndarray:
    """Linearised chi-squared flow, blocks [[0, -diag(1/pi)], [K, -d I]] with K = -omega."""
    pi = np.asarray(pi, dtype=float)
    n = pi.size
    L = np.zeros((2 * n, 2 * n))
    L[:n, n:] = -np.diag(1.0 / pi)
    L[n:, :n] = -np.asarray(omega, dtype=float)
    L[n:, n:] = -d * np.eye(n)
    return L


def l_spectrum(L) -> np.ndarray:
    return linalg.eigvals(np.asarray(L, dtype=float))


def map_check(mu: complex, d: float, Q, tol: float = MAP_TOL) -> bool:
    """True when mu (d + mu) is an eigenvalue of Q."""
    image = complex(mu) * (d + complex(mu))
    q_eigenvalues = linalg.eigvals(np.asarray(Q, dtype=float))
    gap = np.abs(q_eigenvalues - image)
    return bool(np.any(gap <= tol * np.maximum(1.0, np.abs(q_eigenvalues))))


def _select_mu_star(l_eigenvalues, tol: float = ZERO_TOL) -> Tuple[complex, bool]:
    eigenvalues = np.asarray(l_eigenvalues, dtype=complex)
    negative = eigenvalues[eigenvalues.real < -tol]
    if negative.size == 0:
        raise NumericalRankError('L has no eigenvalue with negative real part')
    top = negative.real.max()
    tied = negative[negative.real >= top - MU_TIE_TOL * max(1.0, abs(top))]
    best = tied[np.argmin(np.abs(tied.imag))]
    return complex(best), bool(tied.size > 1)


def mu_star(l_eigenvalues) -> complex:
    """Eigenvalue with the largest negative real part; ties go to the smallest |imag|."""
    return _select_mu_star(l_eigenvalues)[0]


def optimal_damping(alpha: float) -> float:
    if not alpha < 0:
        raise InvalidArgumentError(f'alpha_star must be negative, got {alpha}')
    return 2.0 * math.sqrt(-alpha)


def predicted_rate(alpha: float) -> float:
    if not alpha < 0:
        raise InvalidArgumentError(f'alpha_star must be negative, got {alpha}')
    return -math.sqrt(-alpha)


def confisher_hessian(p, pi, weights: WeightMatrix, theta=None) -> np.ndarray:
    """
    Hessian of the con_fisher potential at p.

    Diagonal: sum_j omega_ij theta_ij (1 - log rho_ij) / p_i^2,
    off-diagonal: -omega_ij theta_ij / (p_i p_j), with rho_ij = (p_i pi_j) / (pi_i p_j).
    """
    p = np.asarray(p, dtype=float)
    if np.any(~(p > 0)):
        raise DomainError('con_fisher Hessian needs a strictly positive density')
    pi = np.asarray(pi, dtype=float)
    conductance = edge_conductances(method_spec('con_fisher', theta), p, pi, weights)
    log_r = np.log(p / pi)
    log_rho = log_r[weights.rows] - log_r[weights.cols]
    n = weights.n
    H = np.zeros((n, n))
    H[weights.rows, weights.cols] = -conductance / (p[weights.rows] * p[weights.cols])
    H[np.diag_indices(n)] = np.bincount(weights.rows, weights=conductance * (1.0 - log_rho), minlength=n) / p ** 2
    return H


def confisher_hessian_at_pi(pi, K) -> np.ndarray:
    inv = 1.0 / np.asarray(pi, dtype=float)
    return inv[:, None] * np.asarray(K, dtype=float) * inv[None, :]


def rayleigh_lambda(K, H, rtol: float = SVD_RTOL) -> float:
    """
    min over psi orthogonal to 1 of psi K H K psi^T / psi K psi^T.

    With K = U S U^T (kernel direction dropped) this is the smallest
    eigenvalue of sqrt(S) U^T H U sqrt(S).
    """
    K = np.asarray(K, dtype=float)
    H = np.asarray(H, dtype=float)
    U, s, _ = linalg.svd(K)
    keep = s > rtol * s.max()
    dropped = int(np.sum(~keep))
    if dropped != 1:
        logger.error(f'Onsager matrix has {dropped} negligible singular values, expected 1')
        raise NumericalRankError(f'expected a one-dimensional kernel, found {dropped} negligible singular values')
    U_hat = U[:, keep]
    root = np.sqrt(s[keep])
    M = root[:, None] * (U_hat.T @ H @ U_hat) * root[None, :]
    return float(linalg.eigvalsh(0.5 * (M + M.T))[0])


def chi2_lambda_bound(pi, omega, rtol: float = SVD_RTOL) -> float:
    """min(1/pi) / lambda_max((-omega)^+), i.e. min(1/pi) times the smallest positive eigenvalue of -omega."""
    eigenvalues = linalg.eigvalsh(-np.asarray(omega, dtype=float))
    positive = eigenvalues[eigenvalues > rtol * eigenvalues.max()]
    return float(np.min(1.0 / np.asarray(pi, dtype=float)) * positive.min())


def spectral_report(problem: SamplingProblem, d: Optional[float] = None) -> SpectralReport:
    pi = problem.pi
    q = q_spectrum(problem.Q, pi)
    alpha = alpha_star(q)
    recommended = optimal_damping(alpha)
    damping = recommended if d is None else float(d)
    if damping < 0:
        raise InvalidArgumentError('damping must be nonnegative')

    l_eigenvalues = l_spectrum(chi_system_matrix(pi, problem.omega, damping))
    mu, tie = _select_mu_star(l_eigenvalues)
    K = -problem.omega
    lam = rayleigh_lambda(K, confisher_hessian_at_pi(pi, K))

    flags = {
        'gap_condition_holds': abs(alpha) < 1.0,
        'mu_star_is_real': abs(mu.imag) <= MAP_TOL,
        'mu_star_tie': tie,
        'mu_star_maps_into_q': map_check(mu, damping, problem.Q),
    }
    if not flags['gap_condition_holds']:
        logger.warning(f'|alpha_star| = {abs(alpha):.4g} >= 1, the rate comparison with MH does not apply')
    return SpectralReport(
        q_eigenvalues=q,
        alpha_star=alpha,
        recommended_d=recommended,
        l_eigenvalues=l_eigenvalues,
        mu_star=mu.real,
        lambda_rayleigh=lam,
        damping=damping,
        predicted_rate=predicted_rate(alpha),
        mu_star_imag=mu.imag,
        chi2_lambda_bound=chi2_lambda_bound(pi, problem.omega),
        flags=flags,
    )
