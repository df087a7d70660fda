import pytest

from forchlab.errors import ConfigError
from forchlab.services.config_file import RunConfig, parse_param, sweep_points

BASE = {
    'polynomial': {'law': 'three_term'},
    'grid': {'cells': [16, 8], 'extents': [1.0, 0.5]},
    'boundary': {'psi': 'x + y'},
    'initial': {'kind': 'smooth', 'seed': 4},
    'solver': {'dt': 0.01, 't_end': 0.1},
}


def config(**sections):
    raw = {k: dict(v) for k, v in BASE.items()}
    for key, value in sections.items():
        if value is None:
            raw.pop(key, None)
        else:
            raw[key] = value
    return RunConfig.from_dict(raw, 'cfg')


def test_shipped_configs_load():
    for name in ('minimal', 'mms_sine', 'contraction', 'family', 'full_equation'):
        loaded = RunConfig.load(f'configs/{name}.yaml')
        assert loaded.name == name
        loaded.build_law()
        loaded.build_boundary()


def test_builders():
    cfg = config()
    grid = cfg.build_grid()
    assert grid.shape == (16, 8)
    assert grid.extents == (1.0, 0.5)
    assert cfg.build_law().a == pytest.approx(2 / 3)
    assert cfg.build_initial(grid).values.shape == (16, 8)
    # two-dimensional default for s0
    assert cfg.functional_settings().s0 == 1.5
    assert cfg.solver_config().nsteps == 10


@pytest.mark.parametrize('sections, fragment', [
    ({'solver': {'dtt': 0.1}}, "'dtt'"),
    ({'extra': {}}, '[extra]'),
    ({'initial': {'kind': 'smooth'}}, 'seed'),
    ({'initial': None}, 'expression'),
    ({'grid': {'cells': [4, 4, 4]}}, 'cells'),
    ({'polynomial': {'law': 'cubic'}}, 'cubic'),
    ({'verify': {'theorems': ['bogus']}}, 'bogus'),
    ({'verify': {'lemmas': ['sob4']}}, 'corpus_seed'),
    ({'functionals': {'tracked': ['grad_L9']}}, 'grad_L9'),
    ({'sweep': {'solver.nope': [1]}}, 'solver.nope'),
    ({'sweep': {'solver.dt': []}}, 'non-empty'),
])
def test_config_errors_name_the_problem(sections, fragment):
    with pytest.raises(ConfigError) as info:
        cfg = config(**sections)
        cfg.build_law()
    assert fragment in str(info.value)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match='not found'):
        RunConfig.load(str(tmp_path / 'absent.yaml'))


def test_malformed_yaml(write_config):
    with pytest.raises(ConfigError):
        RunConfig.load(write_config('solver: [dt\n'))


def test_yaml_exponent_floats_and_empty_sections(write_config):
    path = write_config('''
        polynomial:
          law: two_term
        grid:
          cells: [8]
        initial:
          expression: "x*(1 - x)"
        boundary:
        solver:
          dt: 1e-3
          t_end: 2e-2
    ''')
    cfg = RunConfig.load(path)
    assert cfg.solver.dt == 1e-3
    assert isinstance(cfg.solver.t_end, float)
    assert cfg.boundary.psi == '0'
    assert cfg.solver_config().nsteps == 20


@pytest.mark.parametrize('body, fragment', [
    ('- solver\n', 'mapping'),
    ('solver: [1, 2]\n', 'mapping'),
    ('sweep: [1]\n', 'sweep'),
])
def test_config_file_shapes(write_config, body, fragment):
    with pytest.raises(ConfigError, match=fragment):
        RunConfig.load(write_config(body))


def test_override_keeps_other_settings():
    cfg = config().with_override('solver.dt', 0.02)
    assert cfg.solver.dt == 0.02
    assert cfg.solver.t_end == 0.1
    assert cfg.raw['solver']['dt'] == 0.02


def test_parse_param():
    assert parse_param('solver.dt=1e-3, 5e-4') == ('solver.dt', [1e-3, 5e-4])
    assert parse_param('polynomial.law=two_term,three_term') == ('polynomial.law', ['two_term', 'three_term'])
    with pytest.raises(ConfigError):
        parse_param('solver.dt')


def test_sweep_points_in_lexicographic_order():
    cfg = config(sweep={'solver.dt': [0.01, 0.005], 'initial.seed': [1, 2]})
    points = sweep_points(cfg)
    assert [p.name for p in points] == [
        'point_0_seed-1_dt-0.01', 'point_1_seed-1_dt-0.005',
        'point_2_seed-2_dt-0.01', 'point_3_seed-2_dt-0.005',
    ]
    assert points[3].config.solver.dt == 0.005
    assert points[3].config.initial.seed == 2
    assert 'sweep' not in points[0].config.raw


def test_sweep_needs_a_grid():
    with pytest.raises(ConfigError, match='nothing to sweep'):
        sweep_points(config())
    assert len(sweep_points(config(), {'initial.seed': [7]})) == 1
