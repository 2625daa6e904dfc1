import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import polars as pl
from tqdm import tqdm

from discrete_sampler import logger
from discrete_sampler.exceptions import (
    DomainError,
    InvalidArgumentError,
    StepSizeUnderflowError,
    StepTooLargeError,
    UnsupportedMethodError,
)
from discrete_sampler.geometry import (
    MethodSpec,
    edge_conductances,
    f_divergence,
    hamiltonian,
    logz_estimate_error,
    potential,
    potential_grad,
)
from discrete_sampler.graph_model import SamplingProblem, WeightMatrix

DT_MIN_DEFAULT = 1e-12
PINV_RTOL = 1e-12

ODE_COLUMNS = ['iter', 't', 'dt', 'l2_error', 'hamiltonian', 'potential', 'min_p', 'restarts']
JUMP_COLUMNS = ODE_COLUMNS + ['total_particles', 'restarts_this_iter']


@dataclass(frozen=True)
class SimplexState:
    p: np.ndarray
    psi: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'p', np.asarray(self.p, dtype=float))
        object.__setattr__(self, 'psi', np.asarray(self.psi, dtype=float))
        if self.p.shape != self.psi.shape:
            raise InvalidArgumentError('p and psi must have the same shape')
        if not np.all(np.isfinite(self.psi)):
            raise DomainError('momentum must be finite')


@dataclass(frozen=True)
class DampingSchedule:
    """
    Friction gamma(t).

    kinds:
      constant        gamma = value
      nesterov_floor  gamma = max(numerator / (t - offset), floor), t > offset
      piecewise       the last piece whose start is <= t
    """
    kind: str
    value: float = 0.0
    numerator: float = 0.0
    offset: float = 0.0
    floor: float = 0.0
    pieces: Tuple[Tuple[float, 'DampingSchedule'], ...] = ()

    def __post_init__(self):
        if self.kind not in ('constant', 'nesterov_floor', 'piecewise'):
            raise InvalidArgumentError(f'unknown damping kind {self.kind!r}')
        if min(self.value, self.numerator, self.floor) < 0:
            raise InvalidArgumentError('damping parameters must be nonnegative')
        if self.kind == 'piecewise':
            starts = [start for start, _ in self.pieces]
            if not starts or starts[0] > 0:
                raise InvalidArgumentError('piecewise damping must cover t = 0')
            if any(b <= a for a, b in zip(starts, starts[1:])):
                raise InvalidArgumentError('piecewise damping starts must be increasing')

    @classmethod
    def constant(cls, value: float) -> 'DampingSchedule':
        return cls('constant', value=float(value))

    @classmethod
    def nesterov_floor(cls, numerator: float, floor: float, offset: float = 0.0) -> 'DampingSchedule':
        return cls('nesterov_floor', numerator=float(numerator), floor=float(floor), offset=float(offset))

    @classmethod
    def piecewise(cls, pieces: Sequence[Tuple[float, 'DampingSchedule']]) -> 'DampingSchedule':
        return cls('piecewise', pieces=tuple((float(start), sched) for start, sched in pieces))

    @classmethod
    def from_spec(cls, spec: Dict[str, Any]) -> 'DampingSchedule':
        kind = spec.get('kind')
        try:
            if kind == 'constant':
                return cls.constant(spec['value'])
            if kind == 'nesterov_floor':
                return cls.nesterov_floor(spec['numerator'], spec.get('floor', 0.0), spec.get('offset', 0.0))
            if kind == 'piecewise':
                return cls.piecewise([(piece['start'], cls.from_spec(piece['schedule'])) for piece in spec['pieces']])
        except KeyError as e:
            raise InvalidArgumentError(f'damping spec of kind {kind!r} is missing {e}') from e
        raise InvalidArgumentError(f'unknown damping kind {kind!r}')

    def __call__(self, t: float) -> float:
        if self.kind == 'constant':
            return self.value
        if self.kind == 'nesterov_floor':
            if t <= self.offset:
                raise InvalidArgumentError(
                    f'nesterov_floor damping is undefined at t={t} <= offset {self.offset}; '
                    'start it later or cover early times with a piecewise schedule'
                )
            return max(self.numerator / (t - self.offset), self.floor)
        current = self.pieces[0][1]
        for start, schedule in self.pieces:
            if t >= start:
                current = schedule
        return current(t)


@dataclass
class Trajectory:
    """Per-iteration diagnostics of one run."""
    label: str
    jump: bool = False
    records: List[Dict[str, Any]] = field(default_factory=list)
    logz_errors: List[float] = field(default_factory=list)
    states: List[SimplexState] = field(default_factory=list)
    final_density: Optional[np.ndarray] = None
    shrinks: int = 0

    @property
    def columns(self) -> List[str]:
        return JUMP_COLUMNS if self.jump else ODE_COLUMNS

    def append(self, **record) -> None:
        if self.records:
            last = self.records[-1]
            if record['iter'] != last['iter'] + 1 or record['t'] <= last['t']:
                raise InvalidArgumentError('trajectory records must be contiguous in iteration and time')
        self.records.append(record)

    def to_frame(self) -> pl.DataFrame:
        return pl.DataFrame(
            {col: [r[col] for r in self.records] for col in self.columns},
            schema={col: (pl.Int64 if col in ('iter', 'restarts', 'total_particles', 'restarts_this_iter') else pl.Float64)
                    for col in self.columns},
        )

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.records], dtype=float)

    @property
    def final_error(self) -> float:
        return float(self.records[-1]['l2_error'])

    @property
    def effective_time(self) -> float:
        return float(self.records[-1]['t'])

    @property
    def restart_count(self) -> int:
        return int(self.records[-1]['restarts'])

    def fitted_rate(self, lower: float = 1e-11, upper: float = 1e-3) -> float:
        """Least-squares slope of log ||p - pi||_2 against t over errors in (lower, upper)."""
        t = self.column('t')
        err = self.column('l2_error')
        mask = (err > lower) & (err < upper)
        if mask.sum() < 2:
            raise InvalidArgumentError('not enough points inside the fitting window')
        slope, _ = np.polyfit(t[mask], np.log(err[mask]), 1)
        return float(slope)


@dataclass(frozen=True)
class IntegrationOptions:
    dt_min: float = DT_MIN_DEFAULT
    restart_threshold: float = 0.0
    warm_start: int = 0
    progress: bool = False
    keep_states: bool = False


def stochastic_step(Q: np.ndarray, dt: float, dt_min: float = DT_MIN_DEFAULT) -> float:
    """
    Largest dt / 10^k making I + Q dt a transition matrix.

    Off-diagonal entries must lie in [0, 1] and the holding probabilities on
    the diagonal must stay strictly positive.
    """
    diag = np.diag(Q)
    off = Q - np.diag(diag)
    off_max = off.max(initial=0.0)
    while not (np.all(1.0 + diag * dt > 0) and off_max * dt <= 1.0):
        dt /= 10.0
        if dt < dt_min:
            logger.error(f'Step size fell below the floor {dt_min:g}')
            raise StepSizeUnderflowError(f'step size shrank below {dt_min:g} without a valid transition matrix')
    return dt


def mh_master_step(p, Q, dt: float) -> np.ndarray:
    P = np.eye(Q.shape[0]) + Q * dt
    if np.any(P < 0):
        raise StepTooLargeError(f'I + Q dt has negative entries at dt={dt:g}')
    return np.asarray(p, dtype=float) @ P


def p_rhs(method: MethodSpec, p, psi, weights: WeightMatrix, pi) -> np.ndarray:
    """psi K(p): (psi K)_i = sum_j omega_ij theta_ij (psi_i - psi_j)."""
    psi = np.asarray(psi, dtype=float)
    conductance = edge_conductances(method, p, pi, weights)
    flux = conductance * (psi[weights.rows] - psi[weights.cols])
    return np.bincount(weights.rows, weights=flux, minlength=weights.n)


def psi_rhs(method: MethodSpec, p, psi, gamma: float, weights: WeightMatrix, pi) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    psi = np.asarray(psi, dtype=float)
    rhs = -gamma * psi - potential_grad(method, p, pi, weights)
    if method.mobility.depends_on_density:
        dtheta = method.mobility.edge_derivatives(p, pi, weights)
        diff = psi[weights.rows] - psi[weights.cols]
        rhs -= 0.5 * np.bincount(weights.rows, weights=weights.values * dtheta * diff ** 2, minlength=weights.n)
    return rhs


def staggered_step(
        state: SimplexState,
        method: MethodSpec,
        schedule: DampingSchedule,
        dt: float,
        weights: WeightMatrix,
        pi,
    ) -> SimplexState:
    """p moves with the old psi, then psi moves with the new p."""
    if dt <= 0:
        raise InvalidArgumentError('step size must be positive')
    p_new = state.p + dt * p_rhs(method, state.p, state.psi, weights, pi)
    psi_new = state.psi + dt * psi_rhs(method, p_new, state.psi, schedule(state.t), weights, pi)
    return SimplexState(p_new, psi_new, state.t + dt)


def init_momentum(method: MethodSpec, p, pi) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if method.momentum_family == 'ratio':
        return -p / pi
    if np.any(p <= 0):
        raise DomainError(f'{method.name} momentum needs a strictly positive density')
    return -np.log(p / pi)


def restart_ode(state: SimplexState, method: MethodSpec, pi, threshold: float = 0.0) -> Tuple[SimplexState, bool]:
    """Resets psi so that the next p-update is one MH step; no-op above the threshold."""
    if state.p.min() > threshold:
        return state, False
    return SimplexState(state.p, init_momentum(method, state.p, pi), state.t), True


def _safe_potential(method: MethodSpec, p, pi, weights: WeightMatrix) -> float:
    try:
        return potential(method, p, pi, weights)
    except DomainError:
        return math.nan


def _safe_logz(p, problem: SamplingProblem) -> float:
    if np.any(p <= 0):
        return math.nan
    return logz_estimate_error(p, problem.target.unnormalized, problem.target.z)


class OdeIntegrator:
    """Runs the density/momentum flow or the MH master equation on one problem."""

    def __init__(self, problem: SamplingProblem, options: Optional[IntegrationOptions] = None) -> None:
        self.problem = problem
        self.options = options or IntegrationOptions()

    def _record(self, traj: Trajectory, k: int, t: float, dt: float, p: np.ndarray,
                value: float, total: float, restarts: int) -> None:
        traj.append(
            iter=k,
            t=t,
            dt=dt,
            l2_error=float(np.linalg.norm(p - self.problem.pi)),
            hamiltonian=total,
            potential=value,
            min_p=float(p.min()),
            restarts=restarts,
        )
        traj.logz_errors.append(_safe_logz(p, self.problem))

    def _mh_step(self, p: np.ndarray, dt: float) -> Tuple[np.ndarray, float]:
        dt_used = stochastic_step(self.problem.Q, dt, self.options.dt_min)
        return mh_master_step(p, self.problem.Q, dt_used), dt_used

    def _accelerated_step(self, state: SimplexState, method: MethodSpec, schedule: DampingSchedule,
                          dt: float) -> Tuple[SimplexState, float, int, bool]:
        pi, weights = self.problem.pi, self.problem.weights
        gamma = schedule(state.t)
        velocity = p_rhs(method, state.p, state.psi, weights, pi)
        shrinks = 0
        while True:
            p_new = state.p + dt * velocity
            bad = np.any(p_new <= 0) if method.requires_positive_density else np.any(p_new < 0)
            if not bad:
                break
            dt /= 10.0
            shrinks += 1
            if dt < self.options.dt_min:
                logger.error(f'{method.name}: step size fell below {self.options.dt_min:g} at t={state.t:.6g}')
                raise StepSizeUnderflowError(f'step size shrank below {self.options.dt_min:g} at t={state.t:.6g}')
        if shrinks:
            logger.warning(f'{method.name}: step size reduced to {dt:g} at t={state.t:.6g}')
        provisional = SimplexState(p_new, state.psi, state.t + dt)
        restarted_state, restarted = restart_ode(provisional, method, pi, self.options.restart_threshold)
        if restarted:
            return restarted_state, dt, shrinks, True
        psi_new = state.psi + dt * psi_rhs(method, p_new, state.psi, gamma, weights, pi)
        return SimplexState(p_new, psi_new, state.t + dt), dt, shrinks, False

    def run(
            self,
            p0,
            method: Optional[MethodSpec],
            schedule: Optional[DampingSchedule],
            dt: float,
            iterations: int,
        ) -> Trajectory:
        """
        ``method=None`` integrates the MH master equation. Otherwise the first
        ``warm_start`` iterations are MH steps and psi is initialised from the
        density they reach.
        """
        if dt <= 0 or iterations < 0:
            raise InvalidArgumentError('dt must be positive and iterations nonnegative')
        pi, weights = self.problem.pi, self.problem.weights
        label = 'mh' if method is None else method.name
        traj = Trajectory(label=label)
        p = np.asarray(p0, dtype=float)
        state = None
        if method is not None and self.options.warm_start == 0:
            state = SimplexState(p, init_momentum(method, p, pi), 0.0)

        def energies(p_now, state_now):
            if method is None:
                kl = f_divergence('kl', p_now, pi)
                return kl, kl
            value = _safe_potential(method, p_now, pi, weights)
            if state_now is None:
                return value, value
            return value, hamiltonian(method, state_now.p, state_now.psi, weights, pi)

        t = 0.0
        restarts = 0
        value, total = energies(p, state)
        self._record(traj, 0, t, 0.0, p, value, total, restarts)
        if self.options.keep_states and state is not None:
            traj.states.append(state)

        for k in tqdm(range(1, iterations + 1), desc=f'{label} ode', disable=not self.options.progress):
            if method is None or state is None:
                p, dt = self._mh_step(p, dt)
                t += dt
                if method is not None and k == self.options.warm_start:
                    state = SimplexState(p, init_momentum(method, p, pi), t)
            else:
                state, dt, shrinks, restarted = self._accelerated_step(state, method, schedule, dt)
                traj.shrinks += shrinks
                p, t = state.p, state.t
                if restarted:
                    restarts += 1
                    logger.warning(f'{method.name}: ODE restart at iteration {k}')
            value, total = energies(p, state)
            self._record(traj, k, t, dt, p, value, total, restarts)
            if self.options.keep_states and state is not None:
                traj.states.append(state)

        traj.final_density = p
        return traj


def integrate(
        p0,
        method: Optional[MethodSpec],
        schedule: Optional[DampingSchedule],
        dt: float,
        iterations: int,
        problem: SamplingProblem,
        options: Optional[IntegrationOptions] = None,
    ) -> Trajectory:
    return OdeIntegrator(problem, options).run(p0, method, schedule, dt, iterations)


def laplacian_pinv(K: np.ndarray, rtol: float = PINV_RTOL) -> np.ndarray:
    """Pseudo-inverse by eigendecomposition, treating eigenvalues below rtol * max as zero."""
    eigenvalues, vectors = np.linalg.eigh(K)
    keep = eigenvalues > rtol * eigenvalues.max()
    return (vectors[:, keep] / eigenvalues[keep]) @ vectors[:, keep].T


def lyapunov_value(
        t: float,
        p,
        psi,
        pi,
        K: np.ndarray,
        lam: float,
        method: MethodSpec,
        weights: WeightMatrix,
        K_pinv: Optional[np.ndarray] = None,
    ) -> float:
    """
    e^{sqrt(lam) t} (1/2 ||sqrt(lam)(p - pi) + psi K||^2_{K^+} + U(p) - U(pi)).

    Only meaningful for methods with a density-independent Onsager matrix.
    """
    if not method.constant_onsager:
        raise UnsupportedMethodError(f'Lyapunov value needs a constant Onsager matrix, {method.name} has none')
    if lam <= 0:
        raise InvalidArgumentError('lambda must be positive')
    if K_pinv is None:
        K_pinv = laplacian_pinv(K)
    p = np.asarray(p, dtype=float)
    root = math.sqrt(lam)
    v = root * (p - pi) + np.asarray(psi, dtype=float) @ K
    gap = potential(method, p, pi, weights) - potential(method, pi, pi, weights)
    return math.exp(root * t) * (0.5 * float(v @ K_pinv @ v) + gap)
