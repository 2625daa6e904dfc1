import json
import math
import os
from dataclasses import replace
from functools import cached_property
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import polars as pl
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from discrete_sampler import logger
from discrete_sampler.config_manager import ConfigManager
from discrete_sampler.data_storage import DataStorage
from discrete_sampler.dynamics import DampingSchedule, IntegrationOptions, Trajectory, integrate
from discrete_sampler.exceptions import ConfigError, SamplerError
from discrete_sampler.geometry import MethodSpec, method_spec
from discrete_sampler.graph_model import SamplingProblem, problem_from_spec
from discrete_sampler.helper import Helper
from discrete_sampler.particles import SEED_MAX, JumpConfig, run_amcmc_jump, run_mh_jump

SCALING_COLUMNS = ['particles', 'seed', 'label', 'final_l2_error', 'final_logz_error']


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    name: str = 'experiment'
    graph: Dict[str, Any]
    target: Dict[str, Any] = Field(default_factory=lambda: {'kind': 'uniform'})
    method: Literal['chi_squared', 'kl', 'log_fisher', 'con_fisher']
    mode: Literal['ode', 'jump', 'both'] = 'both'
    dt: float = Field(gt=0)
    iterations: int = Field(gt=0)
    particles: int = Field(default=10000, gt=0)
    warm_start: int = Field(default=0, ge=0)
    damping: Dict[str, Any]
    theta: Optional[List[List[float]]] = None
    initial_density: Optional[List[float]] = None
    restart_threshold: Optional[float] = Field(default=None, ge=0)
    seed: int = Field(default=0, ge=0, le=SEED_MAX)
    output_dir: Optional[str] = None
    progress: bool = False

    @field_validator('damping')
    @classmethod
    def _check_damping(cls, value):
        try:
            DampingSchedule.from_spec(value)
        except SamplerError as e:
            raise ValueError(str(e))
        return value

    @field_validator('initial_density')
    @classmethod
    def _check_initial_density(cls, value):
        if value is not None and (min(value) < 0 or sum(value) <= 0):
            raise ValueError('initial_density must be nonnegative with a positive sum')
        return value

    @model_validator(mode='after')
    def _check_warm_start(self):
        if self.warm_start > self.iterations:
            raise ValueError('warm_start cannot exceed iterations')
        if self.theta is not None and self.method != 'con_fisher':
            raise ValueError('theta is only used by con_fisher')
        return self


def _line_of_key(text: str, key: str) -> Optional[int]:
    index = text.find(f'"{key}"')
    if index < 0:
        return None
    return text.count('\n', 0, index) + 1


def parse_experiment_config(
        text: str,
        preset: Optional[str] = None,
        config_manager: Optional[ConfigManager] = None,
    ) -> ExperimentConfig:
    """
    Builds an ExperimentConfig from JSON text.

    A ``preset`` (from the argument or a ``"preset"`` key) supplies defaults
    that the keys in ``text`` override.
    """
    raw: Dict[str, Any] = {}
    if text.strip():
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            logger.error(f'Config is not valid JSON: {e.msg} (line {e.lineno})')
            raise ConfigError(f'invalid JSON: {e.msg}', line=e.lineno) from e
        if not isinstance(raw, dict):
            raise ConfigError('config must be a JSON object', line=1)

    preset = raw.pop('preset', None) or preset
    if not raw and preset is None:
        raise ConfigError('config is empty')
    merged: Dict[str, Any] = {}
    if preset is not None:
        merged.update((config_manager or ConfigManager()).get_preset(preset))
    merged.update(raw)

    try:
        return ExperimentConfig.model_validate(merged)
    except ValidationError as e:
        first = e.errors()[0]
        location = '.'.join(str(part) for part in first['loc']) or '<root>'
        keys = [part for part in first['loc'] if isinstance(part, str)]
        line = _line_of_key(text, keys[0]) if keys else None
        logger.error(f'Invalid config at {location}: {first["msg"]}')
        raise ConfigError(f'{location}: {first["msg"]}', line=line) from e


def load_experiment_config(
        path: Optional[str] = None,
        preset: Optional[str] = None,
        config_manager: Optional[ConfigManager] = None,
    ) -> ExperimentConfig:
    text = ''
    if path is not None:
        try:
            with open(path, 'r', encoding='utf-8') as f:
                text = f.read()
        except FileNotFoundError as e:
            logger.error(f"Error: The file {path} does not exist.")
            raise ConfigError(f'config file {path} does not exist') from e
    return parse_experiment_config(text, preset, config_manager)


def trajectory_summary(traj: Trajectory) -> Dict[str, Any]:
    iterations = len(traj.records) - 1
    logz = traj.logz_errors[-1] if traj.logz_errors else math.nan
    return {
        'final_l2_error': traj.final_error,
        'final_logz_error': logz,
        'effective_time': traj.effective_time,
        'shrinks': traj.shrinks,
        'restarts': traj.restart_count,
        'restarts_per_1000': 1000.0 * traj.restart_count / iterations if iterations else 0.0,
    }


class Experiment:
    """One configured run: MH baseline and the accelerated method, as ODE and/or jump process."""

    def __init__(
            self,
            config: ExperimentConfig,
            config_manager: Optional[ConfigManager] = None,
            data_storage: Optional[DataStorage] = None,
        ) -> None:
        self.config = config
        self.config_manager = config_manager or ConfigManager()
        self.data_storage = data_storage or DataStorage()
        self.helper = Helper()

    @cached_property
    def problem(self) -> SamplingProblem:
        return problem_from_spec(self.config.graph, self.config.target, self.config_manager.MAX_HYPERCUBE_DIM)

    @cached_property
    def method(self) -> MethodSpec:
        return method_spec(self.config.method, self.config.theta, n=self.problem.n)

    @cached_property
    def schedule(self) -> DampingSchedule:
        return DampingSchedule.from_spec(self.config.damping)

    @property
    def initial_density(self) -> np.ndarray:
        if self.config.initial_density is None:
            return np.full(self.problem.n, 1.0 / self.problem.n)
        density = np.asarray(self.config.initial_density, dtype=float)
        if density.size != self.problem.n:
            raise ConfigError(f'initial_density has {density.size} entries, the graph has {self.problem.n} states')
        return density / density.sum()

    @property
    def output_dir(self) -> str:
        return self.config.output_dir or os.path.join(self.config_manager.OUTPUT_DIR, self.config.name)

    def run_ode(self) -> Dict[str, Trajectory]:
        cfg = self.config
        p0 = self.initial_density
        base = IntegrationOptions(
            dt_min=self.config_manager.DT_MIN,
            restart_threshold=self.config_manager.RESTART_THRESHOLD if cfg.restart_threshold is None else cfg.restart_threshold,
            progress=cfg.progress,
        )
        mh = integrate(p0, None, None, cfg.dt, cfg.iterations, self.problem, base)
        accelerated = integrate(p0, self.method, self.schedule, cfg.dt, cfg.iterations, self.problem,
                                replace(base, warm_start=cfg.warm_start))
        return {'mh': mh, self.method.name: accelerated}

    def run_jump(self, particles: Optional[int] = None, seed: Optional[int] = None) -> Dict[str, Trajectory]:
        cfg = self.config
        jump_config = JumpConfig(
            particles=particles or cfg.particles,
            dt=cfg.dt,
            iterations=cfg.iterations,
            seed=cfg.seed if seed is None else seed,
            dt_min=self.config_manager.DT_MIN,
            progress=cfg.progress,
        )
        mh, _ = run_mh_jump(jump_config, self.problem, self.initial_density)
        accelerated_config = replace(jump_config, warm_start=cfg.warm_start)
        accelerated, _ = run_amcmc_jump(accelerated_config, self.problem, self.method, self.schedule, self.initial_density)
        return {'mh': mh, self.method.name: accelerated}

    def run(self, write: bool = True) -> Dict[str, Any]:
        cfg = self.config
        logger.info(f'Starting experiment {cfg.name} ({cfg.method}, mode={cfg.mode}, seed={cfg.seed})')
        results: Dict[str, Dict[str, Trajectory]] = {}
        if cfg.mode in ('ode', 'both'):
            results['ode'] = self.run_ode()
        if cfg.mode in ('jump', 'both'):
            results['jump'] = self.run_jump()

        config_payload = self.helper.to_jsonable(cfg.model_dump(exclude={'output_dir', 'progress'}))
        manifest = {
            'config': config_payload,
            'content_hash': self.helper.content_hash(config_payload),
            'seed': cfg.seed,
            'summary': {
                mode: {label: trajectory_summary(traj) for label, traj in runs.items()}
                for mode, runs in results.items()
            },
            'files': {},
        }
        if write:
            for mode, runs in results.items():
                schema = self.config_manager.TRAJECTORY_JUMP_SCHEMA if mode == 'jump' else self.config_manager.TRAJECTORY_ODE_SCHEMA
                for label, traj in runs.items():
                    path = self.config_manager.get_trajectory_csv_path(self.output_dir, cfg.name, mode, label)
                    self.data_storage.output_csv(path, traj.to_frame(), schema=schema, mode='overwrite')
                    manifest['files'][f'{mode}/{label}'] = os.path.basename(path)
            self.data_storage.output_json(os.path.join(self.output_dir, self.config_manager.MANIFEST_FILE), manifest)
        logger.info(f'Finished experiment {cfg.name}')
        manifest['trajectories'] = results
        return manifest


def _terminal_errors(config_data: Dict[str, Any], particles: int, seed: int) -> List[Dict[str, Any]]:
    experiment = Experiment(ExperimentConfig.model_validate(config_data))
    rows = []
    for label, traj in experiment.run_jump(particles=particles, seed=seed).items():
        rows.append({
            'particles': particles,
            'seed': seed,
            'label': label,
            'final_l2_error': traj.final_error,
            'final_logz_error': traj.logz_errors[-1],
        })
    return rows


def error_scaling(
        config: ExperimentConfig,
        particles: Sequence[int],
        seeds: Sequence[int],
        n_jobs: int = 1,
    ) -> Tuple[pl.DataFrame, float]:
    """
    Terminal jump-process errors over particle counts and seeds.

    Returns the table and the log-log slope of the mean MH error against M.
    """
    config_data = config.model_dump()
    config_data['progress'] = False
    batches = Parallel(n_jobs=n_jobs)(
        delayed(_terminal_errors)(config_data, m, s) for m in particles for s in seeds
    )
    df = pl.DataFrame([row for batch in batches for row in batch]).select(SCALING_COLUMNS)
    mh = df.filter(pl.col('label') == 'mh').group_by('particles').agg(pl.col('final_l2_error').mean()).sort('particles')
    slope = Helper().log_log_slope(mh['particles'].to_numpy(), mh['final_l2_error'].to_numpy())
    logger.info(f'MH terminal error scales as M^{slope:.3f}')
    return df, slope
