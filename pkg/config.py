import os
from dotenv import load_dotenv

load_dotenv()

class Config:
    basedir = os.path.abspath(os.path.dirname(__file__))
    SQLALCHEMY_DATABASE_URI = os.getenv('DATABASE_URL') or 'sqlite:///' + os.path.join(basedir, 'instance', 'forchlab.db')
    SQLALCHEMY_TRACK_MODIFICATIONS = False

    # Run output (the only run-related setting the environment may override)
    OUTPUT_ROOT = os.getenv('FORCHLAB_OUTPUT_ROOT', 'runs')
    DEFAULT_WORKERS = 1
    LOG_LEVEL = 'INFO'

class TestConfig(Config):
    TESTING = True
    SQLALCHEMY_DATABASE_URI = 'sqlite://'
    LOG_LEVEL = 'WARNING'
