from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np
from scipy.special import rel_entr

from discrete_sampler.exceptions import DomainError, InvalidArgumentError, PositivityError, UnsupportedMethodError
from discrete_sampler.graph_model import WeightMatrix

LOG_MEAN_EPS = 1e-12
LOG_MEAN_SERIES_EPS = 1e-4

METHOD_NAMES = ('chi_squared', 'kl', 'log_fisher', 'con_fisher')

MobilityVariant = Literal['uniform', 'log_mean', 'constant_matrix']


def _as_positive(x, name: str, error=DomainError) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise error(f'{name} must be strictly positive')
    return x


def log_mean(x, y) -> np.ndarray:
    """
    Logarithmic mean (x - y) / (log x - log y), elementwise.

    Arguments are ordered so the result is exactly symmetric. When the log
    difference is below ``LOG_MEAN_EPS`` the smaller argument is returned.
    """
    x = _as_positive(x, 'log_mean arguments')
    y = _as_positive(y, 'log_mean arguments')
    hi = np.maximum(x, y)
    lo = np.minimum(x, y)
    gap = np.log1p((hi - lo) / lo)
    near = gap < LOG_MEAN_EPS
    safe_gap = np.where(near, 1.0, gap)
    return np.where(near, lo, (hi - lo) / safe_gap)


def log_mean_derivative(x, y) -> np.ndarray:
    """d/dx of the logarithmic mean: (L - 1 + e^-L) / L^2 with L = log(x / y)."""
    x = _as_positive(x, 'log_mean arguments')
    y = _as_positive(y, 'log_mean arguments')
    L = np.log(x / y)
    small = np.abs(L) < LOG_MEAN_SERIES_EPS
    safe = np.where(small, 1.0, L)
    exact = (safe + np.expm1(-safe)) / safe ** 2
    series = 0.5 - L / 6.0 + L ** 2 / 24.0
    return np.where(small, series, exact)


def mobility_eval(variant: MobilityVariant, x: float, y: float) -> float:
    if not (x > 0 and y > 0):
        raise DomainError(f'mobility arguments must be positive, got ({x}, {y})')
    if variant == 'log_mean':
        return float(log_mean(x, y))
    if variant in ('uniform', 'constant_matrix'):
        return 1.0
    raise InvalidArgumentError(f'unknown mobility variant {variant!r}')


def mobility_derivative(variant: MobilityVariant, x: float, y: float) -> float:
    if not (x > 0 and y > 0):
        raise DomainError(f'mobility arguments must be positive, got ({x}, {y})')
    if variant == 'log_mean':
        return float(log_mean_derivative(x, y))
    if variant in ('uniform', 'constant_matrix'):
        return 0.0
    raise InvalidArgumentError(f'unknown mobility variant {variant!r}')


@dataclass(frozen=True)
class Mobility:
    variant: MobilityVariant = 'uniform'
    theta: Optional[np.ndarray] = None

    @property
    def depends_on_density(self) -> bool:
        return self.variant == 'log_mean'

    def edge_values(self, p: np.ndarray, pi: np.ndarray, weights: WeightMatrix) -> np.ndarray:
        """theta_ij on every directed edge of ``weights``."""
        if self.variant == 'uniform':
            return np.ones_like(weights.values)
        if self.variant == 'constant_matrix':
            if self.theta is None:
                return np.ones_like(weights.values)
            if self.theta.shape != (weights.n, weights.n):
                raise InvalidArgumentError(f'theta has shape {self.theta.shape}, expected {(weights.n, weights.n)}')
            return self.theta[weights.rows, weights.cols]
        p = _as_positive(p, 'density', error=PositivityError)
        r = p / pi
        return log_mean(r[weights.rows], r[weights.cols])

    def edge_derivatives(self, p: np.ndarray, pi: np.ndarray, weights: WeightMatrix) -> np.ndarray:
        """d theta_ij / d p_i on every directed edge; zero for constant mobilities."""
        if not self.depends_on_density:
            return np.zeros_like(weights.values)
        p = _as_positive(p, 'density', error=PositivityError)
        r = p / pi
        return log_mean_derivative(r[weights.rows], r[weights.cols]) / pi[weights.rows]


@dataclass(frozen=True)
class MethodSpec:
    name: str
    mobility: Mobility
    potential_kind: Literal['chi2', 'kl', 'fisher', 'squared_log']
    # momentum initialisation: -p/pi ('ratio') or -log(p/pi) ('log_ratio')
    momentum_family: Literal['ratio', 'log_ratio']

    @property
    def constant_onsager(self) -> bool:
        return not self.mobility.depends_on_density

    @property
    def requires_positive_density(self) -> bool:
        return self.potential_kind != 'chi2'


def method_spec(name: str, theta: Optional[Sequence[Sequence[float]]] = None, n: Optional[int] = None) -> MethodSpec:
    """Method by name. When ``n`` is given a con_fisher ``theta`` must be n x n."""
    if name == 'chi_squared':
        return MethodSpec(name, Mobility('uniform'), 'chi2', 'ratio')
    if name == 'kl':
        return MethodSpec(name, Mobility('log_mean'), 'kl', 'log_ratio')
    if name == 'log_fisher':
        return MethodSpec(name, Mobility('log_mean'), 'fisher', 'log_ratio')
    if name == 'con_fisher':
        matrix = None
        if theta is not None:
            matrix = np.asarray(theta, dtype=float)
            if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
                raise InvalidArgumentError('con_fisher theta must be a square matrix')
            if n is not None and matrix.shape != (n, n):
                raise InvalidArgumentError(f'con_fisher theta has shape {matrix.shape}, the graph has {n} states')
            if not np.allclose(matrix, matrix.T) or np.any(matrix <= 0):
                raise InvalidArgumentError('con_fisher theta must be symmetric and positive')
            matrix.setflags(write=False)
        return MethodSpec(name, Mobility('constant_matrix', matrix), 'squared_log', 'ratio')
    raise UnsupportedMethodError(f'unknown method {name!r}, expected one of {METHOD_NAMES}')


def edge_conductances(method: MethodSpec, p, pi, weights: WeightMatrix) -> np.ndarray:
    """omega_ij * theta_ij(p) on every directed edge."""
    return weights.values * method.mobility.edge_values(np.asarray(p, dtype=float), pi, weights)


def onsager_matrix(method: MethodSpec, weights: WeightMatrix, p, pi) -> np.ndarray:
    conductance = edge_conductances(method, p, pi, weights)
    K = np.zeros((weights.n, weights.n))
    K[weights.rows, weights.cols] = -conductance
    K[np.diag_indices(weights.n)] = np.bincount(weights.rows, weights=conductance, minlength=weights.n)
    return K


def kinetic_energy(method: MethodSpec, p, psi, weights: WeightMatrix, pi) -> float:
    """(1/2) psi K psi^T written as a quarter of the directed edge sum."""
    psi = np.asarray(psi, dtype=float)
    conductance = edge_conductances(method, p, pi, weights)
    diff = psi[weights.rows] - psi[weights.cols]
    return float(0.25 * np.sum(conductance * diff ** 2))


def f_divergence(f_kind: Literal['chi2', 'kl'], p, pi) -> float:
    p = np.asarray(p, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if f_kind == 'chi2':
        return float(0.5 * np.sum((p - pi) ** 2 / pi))
    if f_kind == 'kl':
        return float(np.sum(rel_entr(p, pi)))
    raise InvalidArgumentError(f'unknown f-divergence {f_kind!r}')


def potential(method: MethodSpec, p, pi, weights: WeightMatrix) -> float:
    p = np.asarray(p, dtype=float)
    if method.potential_kind == 'chi2':
        return f_divergence('chi2', p, pi)
    p = _as_positive(p, f'density for {method.name}')
    if method.potential_kind == 'kl':
        return f_divergence('kl', p, pi)

    r = p / pi
    log_r = np.log(r)
    log_diff = log_r[weights.rows] - log_r[weights.cols]
    if method.potential_kind == 'fisher':
        ratio_diff = r[weights.rows] - r[weights.cols]
        return float(0.25 * np.sum(weights.values * log_diff * ratio_diff))
    conductance = edge_conductances(method, p, pi, weights)
    return float(0.25 * np.sum(conductance * log_diff ** 2))


def potential_grad(method: MethodSpec, p, pi, weights: WeightMatrix) -> np.ndarray:
    """
    Gradient dU/dp_i.

    For ``kl`` the flat derivative log(p_i / pi_i) + 1 is returned without the
    constant 1, which lies in the kernel of K, so that (pi, 0) stays an exact
    fixed point. Compare against finite differences on zero-sum directions.
    """
    p = np.asarray(p, dtype=float)
    if method.potential_kind == 'chi2':
        return p / pi - 1.0
    p = _as_positive(p, f'density for {method.name}')
    if method.potential_kind == 'kl':
        return np.log(p / pi)

    n = weights.n
    r = p / pi
    log_rho = np.log(r[weights.rows]) - np.log(r[weights.cols])
    if method.potential_kind == 'fisher':
        rho = r[weights.rows] / r[weights.cols]
        terms = weights.values * (log_rho + 1.0 - 1.0 / rho)
        return np.bincount(weights.rows, weights=terms, minlength=n) / (2.0 * pi)
    conductance = edge_conductances(method, p, pi, weights)
    return np.bincount(weights.rows, weights=conductance * log_rho, minlength=n) / p


def hamiltonian(method: MethodSpec, p, psi, weights: WeightMatrix, pi) -> float:
    return kinetic_energy(method, p, psi, weights, pi) + potential(method, p, pi, weights)


def logz_estimate_error(p, unnormalized, z_true: float) -> float:
    """|sum_i p_i log(p_i / w_i) + log Z| for unnormalized weights w."""
    p = _as_positive(p, 'density for the log-Z estimate')
    unnormalized = np.asarray(unnormalized, dtype=float)
    return float(abs(np.sum(p * np.log(p / unnormalized)) + np.log(z_true)))


@dataclass(frozen=True)
class PotentialReport:
    value: float
    gradient: np.ndarray


def potential_report(method: MethodSpec, p, pi, weights: WeightMatrix) -> PotentialReport:
    return PotentialReport(
        value=potential(method, p, pi, weights),
        gradient=potential_grad(method, p, pi, weights),
    )

