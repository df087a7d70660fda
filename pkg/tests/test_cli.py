import json
import os

import pytest

from forchlab.models import RunEntry, VerificationEntry
from forchlab.services.records import RunRecord

MINIMAL = '''
    polynomial:
      law: two_term

    grid:
      cells: [32]

    boundary:
      psi: "0"

    initial:
      expression: "sin(pi*x)"

    solver:
      dt: 1e-2
      t_end: 0.1
      snapshots: 2
'''

FAMILY = '''
    polynomial:
      law: two_term

    grid:
      cells: [16]

    boundary:
      psi: "0.5*sin(2*pi*t)*(1 + x)"

    initial:
      kind: smooth
      seed: 0

    solver:
      dt: 2e-2
      t_end: 1.0
      snapshots: 10
      every_step: {every_step}

    functionals: {functionals}

    verify:
      theorems: {theorems}
      train: 2
      holdout: 1
      seed: 0
      holdout_slack: 100.0

    sweep:
      initial.seed: [1, 2, 3]
'''


def family(write_config, functionals='{}', theorems='[h_integral, h_energy]', every_step='true'):
    body = FAMILY.format(functionals=functionals, theorems=theorems, every_step=every_step)
    return write_config(body, name='fam')


def family_runs(tmp_path):
    return [tmp_path / 'runs' / 'fam' / f'point_{i}_seed-{i + 1}' for i in range(3)]


def test_run_writes_record_and_catalog(app, invoke, write_config, tmp_path):
    path = write_config(MINIMAL, name='decay')
    result = invoke('run', path)
    assert result.exit_code == 0, result.output
    directory = tmp_path / 'runs' / 'decay'
    header = (directory / 'series.csv').read_text().splitlines()[0]
    assert header.startswith('t,p_min,p_max,')
    meta = json.loads((directory / 'meta.json').read_text())
    assert meta['complete'] is True
    assert meta['name'] == 'decay'
    entries = RunEntry.query.all()
    assert len(entries) == 1
    assert entries[0].status == 'complete'
    assert entries[0].steps == 10


def test_unknown_key_is_a_config_error(invoke, write_config, tmp_path):
    path = write_config(MINIMAL.replace('dt: 1e-2', 'dtt: 1e-2'))
    result = invoke('run', path)
    assert result.exit_code == 2
    assert 'dtt' in result.output
    assert not (tmp_path / 'runs' / 'case').exists()


def test_malformed_yaml_is_a_config_error(invoke, write_config):
    result = invoke('run', write_config('solver: [dt\n'))
    assert result.exit_code == 2


def test_cfl_violation_rejected_before_any_output(invoke, write_config, tmp_path):
    body = MINIMAL.replace('dt: 1e-2', 'scheme: explicit\n      dt: 1e-2')
    result = invoke('run', write_config(body))
    assert result.exit_code == 2
    assert 'CFL' in result.output
    assert not (tmp_path / 'runs' / 'case' / 'series.csv').exists()


def test_picard_failure_exits_3_with_partial_record(app, invoke, write_config, tmp_path):
    body = MINIMAL.replace('t_end: 0.1', 't_end: 0.1\n      picard_max_iter: 1')
    result = invoke('run', write_config(body))
    assert result.exit_code == 3
    record = RunRecord.load(str(tmp_path / 'runs' / 'case'))
    assert not record.complete
    assert 'Picard' in record.error
    assert RunEntry.query.one().status == 'incomplete'


def test_identical_configs_give_identical_series(invoke, write_config, tmp_path):
    path = write_config(MINIMAL)
    first, second = tmp_path / 'a', tmp_path / 'b'
    assert invoke('--output', first, 'run', path).exit_code == 0
    assert invoke('--output', second, 'run', path).exit_code == 0
    assert (first / 'series.csv').read_bytes() == (second / 'series.csv').read_bytes()


def test_global_seed_overrides_random_initial_data(invoke, write_config, tmp_path):
    out = tmp_path / 'seeded'
    result = invoke('--seed', 5, '--output', out, 'run', family(write_config))
    assert result.exit_code == 0, result.output
    meta = json.loads((out / 'meta.json').read_text())
    assert meta['config']['initial']['seed'] == 5


def test_sweep_names_point_directories(app, invoke, write_config, tmp_path):
    result = invoke('--workers', 1, 'sweep', family(write_config))
    assert result.exit_code == 0, result.output
    root = tmp_path / 'runs' / 'fam'
    assert sorted(os.listdir(root)) == ['point_0_seed-1', 'point_1_seed-2', 'point_2_seed-3']
    assert RunEntry.query.filter_by(kind='sweep').count() == 3


def test_param_overrides_sweep(invoke, write_config, tmp_path):
    out = tmp_path / 'grid'
    result = invoke('--output', out, '--workers', 1, 'sweep', family(write_config), '--param', 'initial.seed=5,6')
    assert result.exit_code == 0, result.output
    assert sorted(os.listdir(out)) == ['point_0_seed-5', 'point_1_seed-6']


def test_workers_must_be_positive(invoke, write_config):
    result = invoke('--workers', 0, 'sweep', family(write_config))
    assert result.exit_code == 2


def test_verify_and_report_on_a_family(app, invoke, write_config, tmp_path):
    path = family(write_config)
    assert invoke('sweep', path).exit_code == 0
    runs = family_runs(tmp_path)

    result = invoke('verify', path, *runs)
    assert result.exit_code == 0, result.output
    assert 'verdict: ' in result.output
    assert result.output.count('contraction ') == 2
    report = tmp_path / 'runs' / 'fam-report'
    rows = (report / 'report.csv').read_text().splitlines()
    assert rows[0] == 'theorem,C,C_prime,train_max_ratio,holdout_max_ratio,passed'
    assert [r.split(',')[0] for r in rows[1:]] == ['h_integral', 'h_energy']
    text = (report / 'report.txt').read_text()
    assert 'verdict: ' in text
    assert 'training runs (2)' in text
    assert 'Tail-window constants' in text
    assert (report / 'derived.csv').read_text().startswith('run,t,EnvA,lambda,')
    assert VerificationEntry.query.count() == 2

    out = tmp_path / 'plots'
    result = invoke('--output', out, 'report', *runs)
    assert result.exit_code == 0, result.output
    functionals = (out / 'functionals.csv').read_text().splitlines()
    assert functionals[0].startswith('run,t,')
    gaps = (out / 'gaps.csv').read_text().splitlines()
    assert gaps[0] == 'pair,t,gap'
    # three seeds of one configuration: pairs (first, second) and (first, third)
    assert len({line.split(',')[0] for line in gaps[1:]}) == 2
    # every step of the 50-step runs is a gap row
    assert len(gaps) == 1 + 2 * 51


def test_contraction_without_every_step_fails_the_verdict(invoke, write_config, tmp_path):
    path = family(write_config, every_step='false')
    assert invoke('sweep', path).exit_code == 0

    result = invoke('verify', path, *family_runs(tmp_path))
    assert result.exit_code == 0, result.output
    assert 'contraction' in result.output and 'FAIL' in result.output
    assert 'verdict: FAIL' in result.output
    text = (tmp_path / 'runs' / 'fam-report' / 'report.txt').read_text()
    assert 'verdict: FAIL' in text
    assert 'every_step' in text


def test_verify_names_missing_column(invoke, write_config, tmp_path):
    path = family(write_config, functionals='{tracked: [grad_Linf, grad_L2, bdry_grad_sup]}',
                  theorems='[grad_linf_window]')
    assert invoke('sweep', path).exit_code == 0
    result = invoke('verify', path, *family_runs(tmp_path))
    assert result.exit_code == 4
    assert 'lambda' in result.output


def test_verify_refuses_incomplete_runs(invoke, write_config, tmp_path):
    body = MINIMAL.replace('t_end: 0.1', 't_end: 0.1\n      picard_max_iter: 1')
    path = write_config(body)
    invoke('run', path)
    result = invoke('verify', path, tmp_path / 'runs' / 'case')
    assert result.exit_code == 4
    assert 'incomplete' in result.output


@pytest.mark.slow
def test_mms_command_reports_orders(invoke, tmp_path):
    out = tmp_path / 'mms'
    result = invoke('--output', out, 'mms', 'configs/mms_sine.yaml')
    assert result.exit_code == 0, result.output
    rows = (out / 'mms.csv').read_text().splitlines()
    assert rows[0] == 'study,cells,dt,error,order'
    assert len(rows) > 3
