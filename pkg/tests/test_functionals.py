import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from forchlab.errors import AdmissibilityError, DomainError, RegistryError
from forchlab.services.discretization import BoundaryData, Grid, ScalarField
from forchlab.services.functionals import (
    DERIVED_IDS, STEP_IDS, FunctionalSeries, FunctionalSettings, SpaceTimeField, U_cal, compute_A,
    compute_beta, compute_G, derived_series, double_bracket, env, evaluate_step, exponent_bundle,
    grad_ls_id, lambda_quantity, lp_norm, s_tilde, sup_norm, tail_constants,
)
from forchlab.services.records import RunRecord
from forchlab.services.solver import SolverConfig, run_ibvp


@st.composite
def admissible_inputs(draw):
    a = draw(st.floats(0.05, 0.95))
    n = draw(st.sampled_from([1, 2]))
    alpha_star = a * n / (2 - a)
    alpha = draw(st.floats(max(2.0, alpha_star) + 1e-3, 12.0))
    r1 = alpha * (1 + (2 - a) / n) - a
    p1 = draw(st.floats(1.0, r1 / alpha, exclude_max=True))
    low, high = 2 * n / (n + 2), min(2.0, float(n))
    s0 = draw(st.floats(low, high, exclude_min=True, exclude_max=True))
    return a, n, alpha, p1, s0


@settings(max_examples=200, deadline=None)
@given(admissible_inputs())
def test_exponent_identities(inputs):
    a, n, alpha, p1, s0 = inputs
    assume(s0 < n)
    b = exponent_bundle(a, n, alpha, p1, s0)
    assert 1 / p1 + b.delta1 == pytest.approx(1 + b.delta3, rel=1e-12)
    assert alpha / (alpha - a) + b.delta1 == pytest.approx(1 + b.delta2, rel=1e-12)
    assert alpha / ((alpha - a) * p1) + b.delta1 == pytest.approx(1 + b.delta4, rel=1e-12)
    assert b.delta1 > 0
    assert b.s0_star == pytest.approx(n * s0 / (n - s0))
    assert b.nu0 == pytest.approx(b.rho(s0))
    assert b.z3 >= 1
    assert b.alpha_hat >= alpha


def test_bundle_worked_example():
    b = exponent_bundle(0.5, 2, 4.0, p1=1.0, s0=1.5)
    assert b.r1 == pytest.approx(6.5)
    assert b.delta1 == pytest.approx(5 / 13)
    assert b.delta2 == pytest.approx(48 / 91)
    assert b.delta3 == pytest.approx(b.delta1)
    assert b.delta4 == pytest.approx(b.delta2)
    assert b.z3 == 1.0
    assert b.mu0 == pytest.approx(4 / 3)
    assert b.alpha_star == pytest.approx(2 / 3)
    assert b.r0 == pytest.approx(1.2)
    assert b.s0_star == pytest.approx(6.0)
    assert b.s1 == pytest.approx(1.5)
    assert b.s3 == pytest.approx(1.5)
    assert b.nu0 == pytest.approx(10 / 3)


def test_inadmissible_bundle_lists_every_violation():
    with pytest.raises(AdmissibilityError) as info:
        exponent_bundle(0.5, 2, alpha=1.5, p1=10.0, s0=0.5)
    violations = info.value.violations
    assert any('>= 2' in v for v in violations)
    assert any('s0' in v for v in violations)
    assert any('p1' in v for v in violations)


def test_bundle_rejects_a_outside_unit_interval():
    with pytest.raises(AdmissibilityError, match='a=1.2'):
        exponent_bundle(1.2, 2, 4.0)


def test_q1_infinite_for_p1_one():
    bundle = exponent_bundle(0.5, 2, 4.0, p1=1.0, s0=1.5)
    assert math.isinf(bundle.q1)
    assert math.isinf(bundle.aq)


def test_s_tilde_and_U():
    assert s_tilde(3.0, 0.5) == pytest.approx(max(1.75, 3 / 1.5 - 1))
    assert s_tilde(10.0, 0.5) == pytest.approx(10 / 1.5)
    with pytest.raises(DomainError):
        s_tilde(1.0, 0.5)
    assert U_cal(2.0, 4.0, 0.5) == 0.0
    assert U_cal(3.0, 4.0, 0.5) == pytest.approx(4.0 + 4.0 ** (2 / 1.5 + 0.5))


def test_norms_of_constant_field(grid2):
    field = ScalarField(grid2, np.full(grid2.shape, -3.0))
    assert lp_norm(field, 2) == pytest.approx(3.0 * math.sqrt(grid2.measure))
    assert lp_norm(field, math.inf) == 3.0
    assert sup_norm(field) == 3.0
    with pytest.raises(DomainError):
        lp_norm(field, 0)


def test_lp_norms_of_sine_converge_at_second_order():
    errors = []
    for cells in (16, 32):
        grid = Grid((cells,), (1.0,))
        field = ScalarField(grid, np.sin(np.pi * grid.axis_centers(0)))
        # the midpoint sum of sin^2 is exact
        assert lp_norm(field, 2) == pytest.approx(math.sqrt(0.5), rel=1e-12)
        errors.append(abs(lp_norm(field, 1) - 2 / math.pi))
    assert errors[0] / errors[1] == pytest.approx(4.0, rel=0.01)


@pytest.mark.parametrize('shape', [(32,), (8, 6)])
def test_lp_norm_of_half_indicator(shape):
    grid = Grid(shape, (1.0,) * len(shape))
    values = np.zeros(shape)
    values[: shape[0] // 2] = 1.0
    field = ScalarField(grid, values)
    assert lp_norm(field, 2) == pytest.approx(math.sqrt(0.5), rel=1e-12)
    assert lp_norm(field, 4) == pytest.approx(0.5 ** 0.25, rel=1e-12)


def test_env_is_running_max():
    np.testing.assert_array_equal(env([1.0, 3.0, 2.0, 5.0, 4.0]), [1.0, 3.0, 3.0, 5.0, 5.0])


def test_beta_from_decreasing_tail():
    times = np.linspace(0.0, 4.0, 41)
    values = 10.0 - 2.0 * times
    assert compute_beta(times, values, (3.0, 4.0)) == pytest.approx(2.0)
    assert compute_beta(times, -values, (3.0, 4.0)) == 0.0
    with pytest.raises(DomainError):
        compute_beta(times, values, (3.95, 4.0))


def test_A_vanishes_for_static_constant_data(grid1):
    psi = BoundaryData.from_expressions('2', 1)
    assert compute_A(psi, 4.0, 0.3, grid1, 0.5) == 0.0
    with pytest.raises(DomainError):
        compute_A(psi, 0.5, 0.3, grid1, 0.5)


def test_A_of_linear_static_data(grid1):
    psi = BoundaryData.from_expressions('x', 1)
    assert compute_A(psi, 4.0, 0.0, grid1, 0.5) == pytest.approx(1.0)


def test_G_of_data_linear_in_time(grid1):
    psi = BoundaryData.from_expressions('t', 1)
    assert compute_G(psi, 0.5, 1, grid1, 0.5) == pytest.approx(2.0)
    assert compute_G(psi, 0.5, 2, grid1, 0.5) == pytest.approx(1.0)
    assert compute_G(psi, 0.5, 3, grid1, 0.5) == pytest.approx(3.0)
    with pytest.raises(DomainError):
        compute_G(psi, 0.5, 4, grid1, 0.5)


def test_beta_of_periodic_A():
    times = np.linspace(0.0, 4 * math.pi, 4001)
    assert compute_beta(times, 2.0 + np.sin(times), (2 * math.pi, 4 * math.pi)) == pytest.approx(1.0, rel=1e-3)


def test_lambda_of_constant_density():
    times = np.linspace(0.0, 2.0, 21)
    series = FunctionalSeries(times, {'lambda_density': np.full_like(times, 3.0)})
    assert lambda_quantity(series, 0.5, 1.5, 1.5) == pytest.approx(3.0 ** (1 / 3))


def test_series_windows():
    times = np.linspace(0.0, 2.0, 21)
    series = FunctionalSeries(times, {'u': 3.0 * times, 'one': np.ones_like(times)})
    assert 'u' in series and 'v' not in series
    assert series.window_integral('u', 0.0, 2.0) == pytest.approx(6.0)
    assert series.window_integral('one', 0.5, 1.5) == pytest.approx(1.0)
    assert series.window_sup('u', 0.0, 1.0) == pytest.approx(3.0)
    assert series.at('u', 1.05) == pytest.approx(3.0)
    assert series.spacetime_norm('u', 0.0, 2.0, math.inf) == pytest.approx(6.0)
    assert series.cumulative_integral('one')[-1] == pytest.approx(2.0)


def test_series_rejects_unsorted_times():
    with pytest.raises(DomainError):
        FunctionalSeries(np.array([0.0, 1.0, 1.0]), {})


def test_missing_column_names_it():
    series = FunctionalSeries(np.array([0.0, 1.0]), {'u': np.zeros(2)})
    with pytest.raises(RegistryError) as info:
        series.column('lambda_density')
    assert info.value.column == 'lambda_density'


def test_tracked_ids_are_validated():
    assert FunctionalSettings().step_ids()[:len(STEP_IDS)] == STEP_IDS
    assert FunctionalSettings(s_values=(3.0, 4.5)).step_ids()[-2:] == ('grad_L3', 'grad_L4.5')
    assert grad_ls_id(3.0) == 'grad_L3'
    with pytest.raises(RegistryError, match='grad_L7'):
        FunctionalSettings(tracked=('p_min', 'grad_L7')).step_ids()


def test_step_functionals_when_p_equals_psi(law):
    grid = Grid((16, 16), (1.0, 1.0))
    psi = BoundaryData.from_expressions('x*y + t', 2)
    state = ScalarField(grid, psi.on_cells(grid, 0.0), 0.0)
    settings = FunctionalSettings(s0=1.5)
    values = evaluate_step(state, np.ones(grid.shape), psi, law, settings)
    assert set(values) == set(settings.step_ids())
    assert values['pbar_L2'] == pytest.approx(0.0, abs=1e-12)
    assert values['sup_pbar'] == pytest.approx(0.0, abs=1e-12)
    assert values['pbar_t_L2'] == pytest.approx(0.0, abs=1e-12)
    assert values['psi_t_sup'] == pytest.approx(1.0)
    assert values['psi_bdry_min'] == pytest.approx(0.0, abs=1e-12)
    assert values['p_min'] <= values['p_max']
    assert values['H_int'] > 0
    assert values['G2'] == pytest.approx(1.0)
    assert math.isfinite(values['grad_psi_Laq'])


def test_double_bracket_of_time_constant_field():
    grid = Grid((64,), (1.0,))
    x = grid.axis_centers(0)
    times = np.linspace(0.0, 1.0, 5)
    u = SpaceTimeField(grid, times, np.tile(np.sin(np.pi * x), (5, 1)))
    bracket = double_bracket(u, 2.0, 0.5)
    # alpha = 2: sup ||u||_2 + (int int |u_x|^1.5)^(1/1.5)
    expected_energy = np.sum(np.abs(np.pi * np.cos(np.pi * x)) ** 1.5) / 64
    assert bracket == pytest.approx(math.sqrt(0.5) + expected_energy ** (1 / 1.5), rel=1e-3)
    with pytest.raises(DomainError):
        SpaceTimeField(grid, times, np.zeros((4, 64)))


def test_record_round_trip(law, tmp_path):
    grid = Grid((8, 6), (1.0, 1.0))
    psi = BoundaryData.from_expressions('0.1*x + y*t', 2)
    p0 = ScalarField(grid, psi.on_cells(grid, 0.0) + 0.3)
    settings = FunctionalSettings(tracked=('p_min', 'p_max', 'grad_L2', 'lambda_density'))
    record = run_ibvp(SolverConfig(dt=0.01, t_end=0.05, snapshots=2), law, p0, psi, settings, {'name': 'rt'})
    record.save(str(tmp_path))
    loaded = RunRecord.load(str(tmp_path))
    assert loaded.complete
    assert loaded.columns == record.columns
    assert loaded.times == record.times
    assert loaded.rows == record.rows
    assert loaded.meta['name'] == 'rt'
    assert [s.step for s in loaded.snapshots] == [0, 2, 5]
    for a, b in zip(loaded.snapshots, record.snapshots):
        np.testing.assert_array_equal(a.values, b.values)
    header = (tmp_path / 'series.csv').read_text().splitlines()[0]
    assert header == 't,p_min,p_max,grad_L2,lambda_density'


def test_derived_series_and_tail_constants(law):
    grid = Grid((8, 6), (1.0, 1.0))
    psi = BoundaryData.from_expressions('0.1*x + y*t', 2)
    p0 = ScalarField(grid, psi.on_cells(grid, 0.0) + 0.3)
    settings = FunctionalSettings()
    record = run_ibvp(SolverConfig(dt=0.01, t_end=0.2, snapshots=2), law, p0, psi, settings, {'name': 'tails'})
    series = record.series
    bundle = settings.bundle(law.a, 2)

    derived = derived_series(series, bundle)
    assert set(derived) == set(DERIVED_IDS)
    assert np.all(np.diff(derived['EnvA']) >= 0)
    assert np.all(np.diff(derived['int_H']) >= 0)
    assert derived['lambda'][0] == 0.0
    assert np.all(derived['K1_cal'] >= 1)
    assert np.all(derived['K2_cal'] >= 1)

    tails = tail_constants(series, bundle)
    assert tails['window_end'] == pytest.approx(0.2)
    assert tails['window_start'] == pytest.approx(0.15)
    assert tails['beta_hat'] >= 0
    assert tails['G1_cal'] >= 1
    assert tails['K1_bar'] >= 1
