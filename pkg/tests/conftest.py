import textwrap

import numpy as np
import pytest

from config import TestConfig
from forchlab import cli, create_app
from forchlab.extensions import db
from forchlab.services.constitutive import ConstitutiveLaw, three_term, two_term
from forchlab.services.discretization import BoundaryData, Grid


@pytest.fixture
def app(tmp_path):
    class Config(TestConfig):
        OUTPUT_ROOT = str(tmp_path / 'runs')

    app = create_app(Config)
    with app.app_context():
        db.create_all()
        yield app
        db.session.remove()
        db.drop_all()


@pytest.fixture
def runner(app):
    return app.test_cli_runner()


@pytest.fixture
def invoke(runner):
    """Run the forchlab command line (global flags first) against the test app."""

    def call(*args):
        return runner.invoke(cli, args=[str(a) for a in args])

    return call


@pytest.fixture
def law():
    return ConstitutiveLaw(two_term())


@pytest.fixture
def law3():
    return ConstitutiveLaw(three_term())


@pytest.fixture
def grid1():
    return Grid((32,), (1.0,))


@pytest.fixture
def grid2():
    return Grid((16, 12), (1.0, 2.0))


@pytest.fixture
def zero_boundary():
    return BoundaryData.from_expressions('0', 1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def write_config(tmp_path):
    """Write a YAML body to <tmp>/<name>.yaml and return the path as a string."""

    def write(body, name='case'):
        path = tmp_path / f'{name}.yaml'
        path.write_text(textwrap.dedent(body))
        return str(path)

    return write
