"""Executing configured runs and sweeps into run directories."""
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from ..errors import ForchlabError
from .solver import run_full_equation, run_ibvp

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunOutcome:
    name: str
    directory: str
    status: str
    steps: int = 0
    t_end: float | None = None
    wall_seconds: float | None = None
    error: str | None = None
    exit_code: int = 0


def execute_run(config, directory, name=None):
    """Run one configuration and write its record to directory, partial records included."""
    name = name or config.name
    grid = config.build_grid()
    law = config.build_law()
    boundary = config.build_boundary(grid)
    p0 = config.build_initial(grid)
    solver_config = config.solver_config()
    settings = config.functional_settings()
    # inadmissible exponents fail before any stepping
    settings.bundle(law.a, grid.n)
    meta = {'name': name, 'config': config.raw}
    runner = run_full_equation if solver_config.full_equation else run_ibvp

    logger.info('run %s: %s scheme, %d cells, dt=%g, t_end=%g', name, solver_config.scheme, grid.size,
                solver_config.dt, solver_config.t_end)
    try:
        record = runner(solver_config, law, p0, boundary, settings, meta)
    except ForchlabError as e:
        record = getattr(e, 'record', None)
        if record is not None:
            record.save(directory)
            logger.warning('run %s stopped at t=%s: %s (partial record saved)', name, record.final_time, e)
        raise
    record.save(directory)
    return record


def _outcome(name, directory, record, error=None, exit_code=0):
    if record is None:
        return RunOutcome(name, directory, 'failed', error=error, exit_code=exit_code)
    return RunOutcome(name, directory, 'complete' if record.complete else 'incomplete',
                      steps=max(len(record.times) - 1, 0), t_end=record.final_time,
                      wall_seconds=record.wall_seconds, error=error, exit_code=exit_code)


def run_point(point, output_root):
    directory = os.path.join(output_root, point.name)
    try:
        record = execute_run(point.config, directory, point.name)
    except ForchlabError as e:
        return _outcome(point.name, directory, getattr(e, 'record', None), str(e), e.exit_code)
    return _outcome(point.name, directory, record)


def run_sweep(points, output_root, workers=1):
    """Run every grid point; outcomes come back in grid order whatever the worker count."""
    if workers <= 1:
        return [run_point(p, output_root) for p in points]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_point, points, [output_root] * len(points)))
