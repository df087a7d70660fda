"""RunRecord: the in-memory result of a run and its directory layout.

    <dir>/meta.json              config echo and run flags
    <dir>/series.csv             t, then one column per functional
    <dir>/snapshots/index.csv    snapshot index, step, time
    <dir>/snapshots/snap_<k>.csv row-major field values
"""
import csv
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError, PreconditionError
from .functionals import FunctionalSeries

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '.17g'


def format_float(value):
    return format(float(value), FLOAT_FORMAT)


@dataclass(frozen=True, eq=False)
class Snapshot:
    index: int
    step: int
    time: float
    values: np.ndarray


@dataclass
class RunRecord:
    meta: dict
    columns: tuple
    times: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    complete: bool = False
    error: str | None = None
    # catalog only, never written to meta.json
    wall_seconds: float | None = None

    def append(self, t, values):
        t = float(t)
        if self.times and not t > self.times[-1]:
            raise DomainError(f'record time stamps must increase: {t!r} after {self.times[-1]!r}')
        self.times.append(t)
        self.rows.append([float(values[c]) for c in self.columns])

    def add_snapshot(self, step, t, values):
        values = np.array(values, dtype=float)
        if not np.all(np.isfinite(values)):
            raise DomainError(f'refusing to store a non-finite snapshot at t={t!r}')
        self.snapshots.append(Snapshot(len(self.snapshots), int(step), float(t), values))

    def mark_incomplete(self, message):
        self.complete = False
        self.error = message

    @property
    def series(self):
        data = np.array(self.rows, dtype=float).reshape(len(self.rows), len(self.columns))
        return FunctionalSeries(np.array(self.times), {c: data[:, i] for i, c in enumerate(self.columns)})

    def column(self, key):
        return self.series.column(key)

    @property
    def final_time(self):
        return self.times[-1] if self.times else None

    def save(self, directory):
        os.makedirs(os.path.join(directory, 'snapshots'), exist_ok=True)
        meta = dict(self.meta, complete=self.complete, error=self.error, columns=list(self.columns))
        with open(os.path.join(directory, 'meta.json'), 'w') as f:
            json.dump(meta, f, indent=2, sort_keys=True)
            f.write('\n')

        with open(os.path.join(directory, 'series.csv'), 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(('t',) + tuple(self.columns))
            for t, row in zip(self.times, self.rows):
                writer.writerow([format_float(t)] + [format_float(v) for v in row])

        with open(os.path.join(directory, 'snapshots', 'index.csv'), 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(('index', 'step', 't'))
            for snap in self.snapshots:
                writer.writerow((snap.index, snap.step, format_float(snap.time)))
        for snap in self.snapshots:
            path = os.path.join(directory, 'snapshots', f'snap_{snap.index}.csv')
            with open(path, 'w', newline='') as f:
                writer = csv.writer(f, lineterminator='\n')
                for row in np.atleast_2d(snap.values):
                    writer.writerow([format_float(v) for v in row])
        logger.info('saved run record to %s (%d steps, %d snapshots)', directory, len(self.times),
                    len(self.snapshots))

    @classmethod
    def load(cls, directory, with_snapshots=True):
        meta_path = os.path.join(directory, 'meta.json')
        if not os.path.exists(meta_path):
            raise PreconditionError(f'{directory} is not a run directory (no meta.json)')
        with open(meta_path) as f:
            meta = json.load(f)
        complete = meta.pop('complete', False)
        error = meta.pop('error', None)
        meta.pop('columns', None)

        with open(os.path.join(directory, 'series.csv'), newline='') as f:
            reader = csv.reader(f)
            header = next(reader)
            times, rows = [], []
            for line in reader:
                times.append(float(line[0]))
                rows.append([float(v) for v in line[1:]])
        record = cls(meta, tuple(header[1:]), times, rows, complete=complete, error=error)

        index_path = os.path.join(directory, 'snapshots', 'index.csv')
        if with_snapshots and os.path.exists(index_path):
            shape = tuple(meta.get('grid', {}).get('cells', ()))
            with open(index_path, newline='') as f:
                reader = csv.reader(f)
                next(reader)
                for index, step, t in reader:
                    values = np.loadtxt(os.path.join(directory, 'snapshots', f'snap_{index}.csv'),
                                        delimiter=',', ndmin=2, dtype=float)
                    if shape:
                        values = values.reshape(shape)
                    record.snapshots.append(Snapshot(int(index), int(step), float(t), values))
        return record
