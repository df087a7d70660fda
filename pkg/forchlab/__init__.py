import logging
import os

import click
from flask import Flask
from flask.cli import FlaskGroup

from config import Config
from .extensions import db


def configure_logging(level):
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )
    logging.getLogger().setLevel(getattr(logging, str(level).upper(), logging.INFO))


def create_app(config_class=Config):
    app = Flask(__name__)
    app.config.from_object(config_class)
    configure_logging(app.config['LOG_LEVEL'])
    os.makedirs(app.instance_path, exist_ok=True)

    # Init Extensions
    db.init_app(app)

    # Register Blueprints (command groups only)
    from .blueprints.simulate import simulate_bp
    from .blueprints.verify import verify_bp

    app.register_blueprint(simulate_bp)
    app.register_blueprint(verify_bp)

    return app


def init_db(app):
    with app.app_context():
        db.create_all()


def _remember(name):
    def callback(ctx, param, value):
        if value is not None:
            ctx.meta[f'forchlab.{name}'] = value
    return callback


cli = FlaskGroup(
    create_app=create_app, add_default_commands=False,
    help='Forchheimer flow simulator and estimate verification lab.',
    params=[
        click.Option(['--output'], expose_value=False, callback=_remember('output'),
                     help='Output location of the command (run directory, report directory, sweep root).'),
        click.Option(['--workers'], type=click.IntRange(min=1), expose_value=False, callback=_remember('workers'),
                     help='Worker processes for sweep.'),
        click.Option(['--seed'], type=int, expose_value=False, callback=_remember('seed'),
                     help='Seed of random initial data and of the verify train/holdout split.'),
    ],
)
