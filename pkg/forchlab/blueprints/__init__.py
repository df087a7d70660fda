import functools
import logging
import os

import click
from flask import current_app

from ..errors import ForchlabError
from ..extensions import db
from ..models import RunEntry

logger = logging.getLogger(__name__)


def exits_on_error(command):
    """Map ForchlabError to its exit code with the message on standard error."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except ForchlabError as e:
            click.echo(f'error: {e}', err=True)
            raise SystemExit(e.exit_code)

    return wrapper


def global_option(name):
    """Value of a global flag (--output, --workers, --seed) given before the command, or None."""
    ctx = click.get_current_context(silent=True)
    return None if ctx is None else ctx.meta.get(f'forchlab.{name}')


def output_root():
    return current_app.config['OUTPUT_ROOT']


def record_outcomes(outcomes, kind):
    """Catalog entries for finished (or failed) runs; parent process only."""
    db.create_all()
    for outcome in outcomes:
        db.session.add(RunEntry(
            name=outcome.name,
            kind=kind,
            output_dir=os.path.abspath(outcome.directory),
            status=outcome.status,
            steps=outcome.steps,
            t_end=outcome.t_end,
            wall_seconds=outcome.wall_seconds,
            error_message=(outcome.error or '')[:500] or None,
        ))
    db.session.commit()
    logger.debug('cataloged %d %s entr%s', len(outcomes), kind, 'y' if len(outcomes) == 1 else 'ies')
