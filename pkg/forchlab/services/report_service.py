import csv
import logging
import os
from datetime import datetime

from flask import render_template

from .functionals import DERIVED_IDS
from .records import format_float

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ('theorem', 'C', 'C_prime', 'train_max_ratio', 'holdout_max_ratio', 'passed')


def _cell(value):
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return format_float(value)
    return '' if value is None else str(value)


def write_csv(path, header, rows):
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def write_verification_csv(checks, directory):
    path = os.path.join(directory, 'report.csv')
    write_csv(path, REPORT_COLUMNS, ([c.row()[k] for k in REPORT_COLUMNS] for c in checks))
    return path


def render_report(checks, lemmas=(), properties=(), contraction=(), split=None, tails=None, failures=(),
                  passed=None):
    return render_template(
        'report.txt',
        checks=checks,
        lemmas=lemmas,
        properties=properties,
        contraction=contraction,
        split=split,
        tails=tails or {},
        failures=failures,
        passed=all(c.passed for c in checks) if passed is None else passed,
    )


def write_text_report(directory, **context):
    path = os.path.join(directory, 'report.txt')
    with open(path, 'w') as f:
        f.write(render_report(**context))
    return path


def write_pdf_report(directory, **context):
    """report.pdf via WeasyPrint; skipped with a warning when WeasyPrint is missing."""
    html = render_template('report_pdf.html', generation_time=datetime.now().strftime('%Y-%m-%d %H:%M'),
                           **context)
    try:
        from weasyprint import HTML
    except ImportError:
        logger.warning('WeasyPrint is not installed; skipping report.pdf')
        return None
    path = os.path.join(directory, 'report.pdf')
    HTML(string=html).write_pdf(path)
    return path


def write_functionals_csv(records, path):
    """Every run's series stacked under a union header, run name first."""
    columns = []
    for record in records.values():
        columns.extend(c for c in record.columns if c not in columns)
    rows = []
    for name, record in records.items():
        index = {c: i for i, c in enumerate(record.columns)}
        for t, values in zip(record.times, record.rows):
            rows.append([name, t] + [values[index[c]] if c in index else None for c in columns])
    write_csv(path, ('run', 't') + tuple(columns), rows)
    return path


def write_gaps_csv(results, path):
    """results: {(name_a, name_b): ContractionResult}."""
    rows = []
    for (a, b), result in results.items():
        rows.extend([f'{a}|{b}', t, g] for t, g in zip(result.times, result.gaps))
    write_csv(path, ('pair', 't', 'gap'), rows)
    return path


def write_derived_csv(derived, path):
    """derived: {run name: (times, {derived id: series})}."""
    rows = []
    for name, (times, columns) in derived.items():
        rows.extend([name, t] + [columns[c][i] for c in DERIVED_IDS] for i, t in enumerate(times))
    write_csv(path, ('run', 't') + DERIVED_IDS, rows)
    return path
