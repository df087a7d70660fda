import os

import click
from flask import Blueprint, current_app

from ..errors import ForchlabError
from ..services.config_file import RunConfig, parse_param, sweep_points
from ..services.discretization import BoundaryData
from ..services.report_service import write_csv
from ..services.runs import RunOutcome, execute_run, run_sweep
from ..services.solver import run_manufactured
from . import exits_on_error, global_option, output_root, record_outcomes

simulate_bp = Blueprint('simulate', __name__, cli_group=None)


def _load_seeded(config_path):
    config = RunConfig.load(config_path)
    seed = global_option('seed')
    if seed is not None and config.initial.kind is not None:
        return config.with_override('initial.seed', seed)
    return config


@simulate_bp.cli.command('run')
@click.argument('config_path', type=click.Path(dir_okay=False))
@exits_on_error
def run_command(config_path):
    """Integrate one configuration and write its run directory (--output: the directory)."""
    config = _load_seeded(config_path)
    directory = global_option('output') or os.path.join(output_root(), config.name)
    kind = 'full' if config.solver.full_equation else 'run'
    try:
        record = execute_run(config, directory)
    except ForchlabError as e:
        partial = getattr(e, 'record', None)
        if partial is not None:
            record_outcomes([RunOutcome(config.name, directory, 'incomplete', max(len(partial.times) - 1, 0),
                                        partial.final_time, partial.wall_seconds, str(e), e.exit_code)], kind)
        raise
    record_outcomes([RunOutcome(config.name, directory, 'complete', len(record.times) - 1, record.final_time,
                                record.wall_seconds)], kind)
    click.echo(f'{config.name}: {len(record.times) - 1} steps to t={record.final_time:g} -> {directory}')


@simulate_bp.cli.command('mms')
@click.argument('config_path', type=click.Path(dir_okay=False))
@exits_on_error
def mms_command(config_path):
    """Convergence study against the manufactured solution in the mms section (--output: mms.csv)."""
    config = RunConfig.load(config_path)
    m = config.mms
    exact = BoundaryData.from_expressions(m.exact, config.dim)
    law = config.build_law()
    report = run_manufactured(
        exact, law, cells=tuple(m.cells), dt_factor=m.dt_factor, t_end=m.t_end,
        temporal_cells=m.temporal_cells, temporal_dts=tuple(m.temporal_dts), temporal_t_end=m.temporal_t_end,
        extents=config.grid.extents, config=config.solver_config(),
    )
    click.echo(f'{"study":<6} {"cells":>6} {"dt":>10} {"max error":>12} {"order":>7}')
    for kind, cells, dt, err, order in report.rows():
        click.echo(f'{kind:<6} {cells:>6d} {dt:>10.3g} {err:>12.4e} {"" if order is None else f"{order:.3f}":>7}')
    output = global_option('output')
    if output:
        os.makedirs(output, exist_ok=True)
        write_csv(os.path.join(output, 'mms.csv'), ('study', 'cells', 'dt', 'error', 'order'), report.rows())


@simulate_bp.cli.command('sweep')
@click.argument('config_path', type=click.Path(dir_okay=False))
@click.option('--param', 'params', multiple=True, help='section.key=v1,v2,... (repeatable).')
@exits_on_error
def sweep_command(config_path, params):
    """Run every point of the parameter grid (--output: root of the point directories)."""
    config = _load_seeded(config_path)
    grid = dict(parse_param(p) for p in params)
    points = sweep_points(config, grid)
    root = global_option('output') or os.path.join(output_root(), config.name)
    workers = global_option('workers') or current_app.config['DEFAULT_WORKERS']
    click.echo(f'{config.name}: {len(points)} point(s), {workers} worker(s)')

    outcomes = run_sweep(points, root, workers)
    record_outcomes(outcomes, 'sweep')
    for outcome in outcomes:
        detail = f' ({outcome.error})' if outcome.error else ''
        click.echo(f'  {outcome.name}: {outcome.status}{detail}')
    worst = max((o.exit_code for o in outcomes), default=0)
    if worst:
        raise SystemExit(worst)
