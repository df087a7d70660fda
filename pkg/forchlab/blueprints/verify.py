import os

import click
from flask import Blueprint, current_app

from .. import init_db
from ..extensions import db
from ..models import VerificationEntry
from ..services.config_file import RunConfig
from ..services.records import RunRecord
from ..services.report_service import (
    write_derived_csv, write_functionals_csv, write_gaps_csv, write_pdf_report, write_text_report,
    write_verification_csv,
)
from ..services.verification import check_contraction, load_family, verify_family
from . import exits_on_error, global_option, output_root

verify_bp = Blueprint('verify', __name__, cli_group=None)


@verify_bp.cli.command('verify')
@click.argument('config_path', type=click.Path(dir_okay=False))
@click.argument('run_dirs', nargs=-1, required=True, type=click.Path(file_okay=False))
@click.option('--pdf', is_flag=True, help='Also render report.pdf with WeasyPrint.')
@exits_on_error
def verify_command(config_path, run_dirs, pdf):
    """Fit the configured inequalities on a run family and write the report (--output: report
    directory, --seed: seed of the train/holdout split)."""
    config = RunConfig.load(config_path)
    seed = global_option('seed')
    if seed is not None:
        config = config.with_override('verify.seed', seed)
    records = load_family(run_dirs)
    outcome = verify_family(config, records)

    directory = global_option('output') or os.path.join(output_root(), f'{config.name}-report')
    os.makedirs(directory, exist_ok=True)
    write_verification_csv(outcome.checks, directory)
    if outcome.derived:
        write_derived_csv(outcome.derived, os.path.join(directory, 'derived.csv'))
    write_text_report(directory, **outcome.context())
    if pdf:
        write_pdf_report(directory, **outcome.context())

    db.create_all()
    for check in outcome.checks:
        db.session.add(VerificationEntry(
            theorem_id=check.theorem_id,
            fitted_c=check.fitted_c,
            fitted_c_prime=check.fitted_c_prime,
            train_max=check.train_max,
            holdout_max=check.holdout_max,
            passed=check.passed,
            report_dir=os.path.abspath(directory),
        ))
    db.session.commit()

    for check in outcome.checks:
        click.echo(f'{check.theorem_id:<6} C={check.fitted_c:.4g} C\'={check.fitted_c_prime:g} '
                   f'holdout max {check.holdout_max:.4g} {"PASS" if check.passed else "FAIL"}')
    for lemma in outcome.lemmas:
        click.echo(f'{lemma.name:<8} {lemma.summary} {"PASS" if lemma.passed else "FAIL"}')
    for pair, result in outcome.contraction:
        click.echo(f'contraction {pair} {"PASS" if result.contracting else "FAIL"}'
                   + (f' ({result.error})' if result.error else ''))
    click.echo(f'verdict: {"PASS" if outcome.passed else "FAIL"}')
    click.echo(f'report written to {directory}')


@verify_bp.cli.command('report')
@click.argument('run_dirs', nargs=-1, required=True, type=click.Path(file_okay=False))
@exits_on_error
def report_command(run_dirs):
    """Plot-ready CSV: every functional series and the gap curves of run pairs (--output: directory)."""
    records = {}
    for path in run_dirs:
        record = RunRecord.load(path)
        records[record.meta.get('name') or os.path.basename(os.path.normpath(path))] = record
    directory = global_option('output') or output_root()
    os.makedirs(directory, exist_ok=True)
    write_functionals_csv(records, os.path.join(directory, 'functionals.csv'))
    gaps = check_contraction(records)
    write_gaps_csv(gaps, os.path.join(directory, 'gaps.csv'))
    click.echo(f'{len(records)} run(s), {len(gaps)} pair(s) -> {directory}')


@verify_bp.cli.command('init-db')
def init_db_command():
    """Create the run catalog tables."""
    init_db(current_app)
    click.echo('Database initialized.')
