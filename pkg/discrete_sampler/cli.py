import functools
import json
import os

import click

from discrete_sampler import logger
from discrete_sampler.config_manager import ConfigManager
from discrete_sampler.data_storage import DataStorage
from discrete_sampler.exceptions import SamplerError
from discrete_sampler.experiment import Experiment, error_scaling, load_experiment_config
from discrete_sampler.graph_model import problem_from_spec
from discrete_sampler.helper import Helper
from discrete_sampler.particles import SEED_MAX
from discrete_sampler.spectral import spectral_report
from discrete_sampler.validation import run_invariant_suite


def _handle_errors(command):
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except SamplerError as e:
            click.echo(f'Error: {e}', err=True)
            raise SystemExit(1)
    return wrapper


def _json_option(value: str, option: str):
    """Accepts inline JSON or a path to a JSON file."""
    if os.path.exists(value):
        with open(value, 'r', encoding='utf-8') as f:
            value = f.read()
    try:
        return json.loads(value)
    except json.JSONDecodeError as e:
        raise click.BadParameter(f'not valid JSON ({e.msg})', param_hint=option)


def _is_empty_config(path: str) -> bool:
    with open(path, 'r', encoding='utf-8') as f:
        text = f.read().strip()
    return text in ('', '{}')


@click.group()
def cli():
    """Metropolis-Hastings and accelerated samplers on finite state spaces."""


@cli.command()
@click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False), help='Experiment JSON file.')
@click.option('--preset', help='Named preset from the packaged config.json.')
@click.option('--seed', type=click.IntRange(0, SEED_MAX), help='Override the run seed.')
@click.option('--mode', type=click.Choice(['ode', 'jump', 'both']), help='Override the run mode.')
@click.option('--output-dir', type=click.Path(file_okay=False), help='Directory for CSVs and the manifest.')
@click.option('--progress/--no-progress', default=False, help='Show progress bars.')
@_handle_errors
def run(config_path, preset, seed, mode, output_dir, progress):
    """Run an experiment and write trajectories plus a manifest."""
    if config_path is None and preset is None:
        raise click.UsageError('give --config, --preset or both')
    if config_path is not None and preset is None and _is_empty_config(config_path):
        raise click.UsageError(f'{config_path} is empty')

    config_manager = ConfigManager()
    config = load_experiment_config(config_path, preset, config_manager)
    overrides = {'seed': seed, 'mode': mode, 'output_dir': output_dir}
    config = config.model_copy(update={k: v for k, v in overrides.items() if v is not None} | {'progress': progress})

    experiment = Experiment(config, config_manager)
    manifest = experiment.run()
    for mode_name, runs in manifest['summary'].items():
        for label, summary in runs.items():
            click.echo(
                f'{mode_name:>4} {label:<12} l2={summary["final_l2_error"]:.3e} '
                f't={summary["effective_time"]:.4g} restarts={summary["restarts"]}'
            )
    click.echo(f'wrote {os.path.join(experiment.output_dir, config_manager.MANIFEST_FILE)}')


@cli.command()
@click.option('--graph', 'graph_spec', required=True, help='Graph spec as JSON or a JSON file path.')
@click.option('--target', 'target_spec', required=True, help='Target spec as JSON or a JSON file path.')
@click.option('--damping', type=float, help='Damping d for the L spectrum; defaults to 2 sqrt|alpha*|.')
@click.option('--output', type=click.Path(dir_okay=False), help='Also write the report to this file.')
@_handle_errors
def spectrum(graph_spec, target_spec, damping, output):
    """Print the spectral report of the MH chain as JSON."""
    graph = _json_option(graph_spec, '--graph')
    target = _json_option(target_spec, '--target')
    config_manager = ConfigManager()
    problem = problem_from_spec(graph, target, config_manager.MAX_HYPERCUBE_DIM)
    report = Helper().to_jsonable(spectral_report(problem, damping).to_dict())
    if output:
        DataStorage().output_json(output, report)
    click.echo(json.dumps(report, indent=2, sort_keys=True))


@cli.command()
@click.option('--seed', type=click.IntRange(0, SEED_MAX), help='Seed of the random test chains.')
@click.option('--trials', type=click.IntRange(min=1), help='Number of random chains.')
@_handle_errors
def validate(seed, trials):
    """Run the fast invariant suite; exits non-zero on any failure."""
    config_manager = ConfigManager()
    checks = run_invariant_suite(
        seed=config_manager.VALIDATION_SEED if seed is None else seed,
        trials=trials or config_manager.VALIDATION_TRIALS,
        max_states=config_manager.VALIDATION_MAX_STATES,
    )
    for check in checks:
        click.echo(f'{"PASS" if check.passed else "FAIL"}  {check.name}  {check.detail}')
    if not all(check.passed for check in checks):
        raise SystemExit(1)


@cli.command()
@click.option('--preset', required=True, help='Named preset used as the base configuration.')
@click.option('--particles', default='1000,10000,100000', show_default=True, help='Comma separated particle counts.')
@click.option('--seeds', default='0,1,2,3,4', show_default=True, help='Comma separated seeds.')
@click.option('--n-jobs', type=int, default=1, show_default=True, help='Parallel workers (joblib).')
@click.option('--output-dir', type=click.Path(file_okay=False), help='Directory for scaling.csv.')
@_handle_errors
def sweep(preset, particles, seeds, n_jobs, output_dir):
    """Terminal jump-process error against the particle count."""
    helper = Helper()
    try:
        particle_counts = helper.parse_int_list(particles)
        seed_list = helper.parse_int_list(seeds)
    except ValueError as e:
        raise click.BadParameter(str(e))

    config_manager = ConfigManager()
    config = load_experiment_config(None, preset, config_manager)
    df, slope = error_scaling(config, particle_counts, seed_list, n_jobs=n_jobs)
    directory = output_dir or os.path.join(config_manager.OUTPUT_DIR, f'{config.name}_sweep')
    path = os.path.join(directory, config_manager.SCALING_CSV)
    DataStorage().output_csv(path, df, schema=config_manager.SCALING_SCHEMA, mode='overwrite')
    logger.info(f'Sweep over {len(particle_counts)} particle counts and {len(seed_list)} seeds done')
    click.echo(f'MH terminal error slope in M: {slope:.3f}')
    click.echo(f'wrote {path}')


if __name__ == '__main__':
    cli()
