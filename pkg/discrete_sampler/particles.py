import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from tqdm import tqdm

from discrete_sampler import logger
from discrete_sampler.dynamics import (
    DT_MIN_DEFAULT,
    DampingSchedule,
    Trajectory,
    init_momentum,
    psi_rhs,
    stochastic_step,
)
from discrete_sampler.exceptions import InvalidArgumentError, PositivityError
from discrete_sampler.geometry import MethodSpec, edge_conductances, f_divergence, hamiltonian, logz_estimate_error, potential
from discrete_sampler.graph_model import SamplingProblem, WeightMatrix

SEED_MAX = 2 ** 64 - 1


@dataclass(frozen=True)
class ParticleEnsemble:
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 1 or np.any(counts < 0):
            raise InvalidArgumentError('particle counts must be a 1-d array of nonnegative integers')
        if counts.sum() < 1:
            raise InvalidArgumentError('an ensemble needs at least one particle')
        counts.setflags(write=False)
        object.__setattr__(self, 'counts', counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def n(self) -> int:
        return self.counts.size


@dataclass(frozen=True)
class PsiRateMatrix:
    Q: np.ndarray


@dataclass(frozen=True)
class JumpConfig:
    particles: int
    dt: float
    iterations: int
    warm_start: int = 0
    seed: int = 0
    restart_policy: str = 'fill_empty'
    dt_min: float = DT_MIN_DEFAULT
    progress: bool = False

    def __post_init__(self):
        if self.particles < 1 or self.dt <= 0 or self.iterations < 0 or self.warm_start < 0:
            raise InvalidArgumentError('particles and dt must be positive, iterations and warm_start nonnegative')
        if not 0 <= self.seed <= SEED_MAX:
            raise InvalidArgumentError('seed must be an unsigned 64-bit integer')
        if self.restart_policy != 'fill_empty':
            raise InvalidArgumentError(f'unknown restart policy {self.restart_policy!r}')


class ParticleStream:
    """
    Counter-based random numbers keyed by the run seed.

    Iteration k draws from a Philox generator whose counter carries k in its
    third word, so any iteration can be replayed without the ones before it.
    Iteration 0 is reserved for the initial ensemble.
    """

    def __init__(self, seed: int) -> None:
        if not 0 <= seed <= SEED_MAX:
            raise InvalidArgumentError('seed must be an unsigned 64-bit integer')
        self.seed = int(seed)

    def generator(self, iteration: int) -> np.random.Generator:
        counter = np.array([0, 0, iteration, 0], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=self.seed, counter=counter))


def empirical_density(ensemble: ParticleEnsemble) -> np.ndarray:
    return ensemble.counts / ensemble.total


def initial_ensemble(density, particles: int, stream: ParticleStream) -> ParticleEnsemble:
    density = np.asarray(density, dtype=float)
    return ParticleEnsemble(stream.generator(0).multinomial(particles, density / density.sum()))


def build_psi_rate_matrix(method: MethodSpec, p, psi, weights: WeightMatrix, pi) -> PsiRateMatrix:
    """
    Rates driven by momentum differences.

    Off-diagonal (i, j): omega_ij theta_ij (psi_j - psi_i)_+ / p_i, so that
    p Q = psi K(p).
    """
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0):
        raise PositivityError('the momentum rate matrix is undefined where p_i = 0')
    psi = np.asarray(psi, dtype=float)
    conductance = edge_conductances(method, p, pi, weights)
    uphill = np.maximum(psi[weights.cols] - psi[weights.rows], 0.0)
    rates = conductance * uphill / p[weights.rows]
    Q = np.zeros((weights.n, weights.n))
    Q[weights.rows, weights.cols] = rates
    Q[np.diag_indices(weights.n)] = -np.bincount(weights.rows, weights=rates, minlength=weights.n)
    return PsiRateMatrix(Q=Q)


def transition_matrix(Q, dt: float, dt_min: float = DT_MIN_DEFAULT) -> Tuple[np.ndarray, float]:
    Q = np.asarray(getattr(Q, 'Q', Q), dtype=float)
    dt_used = stochastic_step(Q, dt, dt_min)
    return np.eye(Q.shape[0]) + Q * dt_used, dt_used


def jump_step(ensemble: ParticleEnsemble, P: np.ndarray, rng: np.random.Generator) -> ParticleEnsemble:
    """Moves the c_s particles of every state s with one multinomial draw from row P_s."""
    P = np.clip(np.asarray(P, dtype=float), 0.0, 1.0)
    P = P / P.sum(axis=1, keepdims=True)
    moves = rng.multinomial(ensemble.counts, P)
    return ParticleEnsemble(moves.sum(axis=0))


def restart_jump(
        ensemble: ParticleEnsemble,
        psi,
        method: MethodSpec,
        pi,
        state_index: Optional[int] = None,
    ) -> Tuple[ParticleEnsemble, np.ndarray, int]:
    """
    Adds one particle to ``state_index`` (or to every empty state, in index
    order) and resets psi from the new empirical density.
    """
    counts = ensemble.counts.copy()
    if state_index is None:
        empty = np.flatnonzero(counts == 0)
    else:
        if counts[state_index] != 0:
            raise InvalidArgumentError(f'state {state_index} is not empty')
        empty = np.array([state_index])
    counts[empty] += 1
    restarted = ParticleEnsemble(counts)
    psi_new = init_momentum(method, empirical_density(restarted), pi)
    return restarted, psi_new, restarted.total


class JumpRunner:
    """Particle realisation of the MH chain and of the accelerated flows."""

    def __init__(self, problem: SamplingProblem, config: JumpConfig) -> None:
        self.problem = problem
        self.config = config
        self.stream = ParticleStream(config.seed)

    def _record(self, traj: Trajectory, k: int, t: float, dt: float, ensemble: ParticleEnsemble,
                value: float, total: float, restarts: int, restarts_now: int) -> None:
        rho = empirical_density(ensemble)
        traj.append(
            iter=k,
            t=t,
            dt=dt,
            l2_error=float(np.linalg.norm(rho - self.problem.pi)),
            hamiltonian=total,
            potential=value,
            min_p=float(rho.min()),
            restarts=restarts,
            total_particles=ensemble.total,
            restarts_this_iter=restarts_now,
        )
        traj.logz_errors.append(
            logz_estimate_error(rho, self.problem.target.unnormalized, self.problem.target.z)
            if np.all(rho > 0) else math.nan
        )

    def _energies(self, method: Optional[MethodSpec], rho: np.ndarray, psi: Optional[np.ndarray]) -> Tuple[float, float]:
        pi, weights = self.problem.pi, self.problem.weights
        if method is None:
            kl = f_divergence('kl', rho, pi)
            return kl, kl
        if method.requires_positive_density and np.any(rho <= 0):
            return math.nan, math.nan
        value = potential(method, rho, pi, weights)
        if psi is None:
            return value, value
        return value, hamiltonian(method, rho, psi, weights, pi)

    def run(
            self,
            method: Optional[MethodSpec] = None,
            schedule: Optional[DampingSchedule] = None,
            initial_density=None,
        ) -> Tuple[Trajectory, ParticleEnsemble]:
        cfg = self.config
        pi, weights, n = self.problem.pi, self.problem.weights, self.problem.n
        label = 'mh' if method is None else method.name
        traj = Trajectory(label=label, jump=True)

        density = np.full(n, 1.0 / n) if initial_density is None else initial_density
        ensemble = initial_ensemble(density, cfg.particles, self.stream)
        P_mh, dt_mh = transition_matrix(self.problem.rate, cfg.dt, cfg.dt_min)

        psi = None
        restarts = 0
        t = 0.0
        dt = cfg.dt

        def start_momentum(ens):
            nonlocal restarts
            added = 0
            if np.any(ens.counts == 0):
                empty = int(np.sum(ens.counts == 0))
                ens, psi_start, _ = restart_jump(ens, None, method, pi)
                restarts += empty
                added = empty
            else:
                psi_start = init_momentum(method, empirical_density(ens), pi)
            return ens, psi_start, added

        restarts_now = 0
        if method is not None and cfg.warm_start == 0:
            ensemble, psi, restarts_now = start_momentum(ensemble)
        value, total = self._energies(method, empirical_density(ensemble), psi)
        self._record(traj, 0, t, 0.0, ensemble, value, total, restarts, restarts_now)

        for k in tqdm(range(1, cfg.iterations + 1), desc=f'{label} jump', disable=not cfg.progress):
            rng = self.stream.generator(k)
            restarts_now = 0
            if psi is None:
                ensemble = jump_step(ensemble, P_mh, rng)
                dt = dt_mh
                t += dt
                if method is not None and k == cfg.warm_start:
                    ensemble, psi, restarts_now = start_momentum(ensemble)
            else:
                gamma = schedule(t)
                rho = empirical_density(ensemble)
                P, dt_used = transition_matrix(build_psi_rate_matrix(method, rho, psi, weights, pi), dt, cfg.dt_min)
                if dt_used < dt:
                    logger.warning(f'{method.name}: jump step size reduced to {dt_used:g} at t={t:.6g}')
                dt = dt_used
                ensemble = jump_step(ensemble, P, rng)
                t += dt
                if np.any(ensemble.counts == 0):
                    restarts_now = int(np.sum(ensemble.counts == 0))
                    ensemble, psi, _ = restart_jump(ensemble, psi, method, pi)
                    restarts += restarts_now
                    logger.debug(f'{method.name}: {restarts_now} particle restart(s) at iteration {k}')
                else:
                    psi = psi + dt * psi_rhs(method, empirical_density(ensemble), psi, gamma, weights, pi)
            value, total = self._energies(method, empirical_density(ensemble), psi)
            self._record(traj, k, t, dt, ensemble, value, total, restarts, restarts_now)

        traj.final_density = empirical_density(ensemble)
        return traj, ensemble


def run_mh_jump(config: JumpConfig, problem: SamplingProblem, initial_density=None) -> Tuple[Trajectory, ParticleEnsemble]:
    return JumpRunner(problem, config).run(initial_density=initial_density)


def run_amcmc_jump(
        config: JumpConfig,
        problem: SamplingProblem,
        method: MethodSpec,
        schedule: DampingSchedule,
        initial_density=None,
    ) -> Tuple[Trajectory, ParticleEnsemble]:
    return JumpRunner(problem, config).run(method, schedule, initial_density)
