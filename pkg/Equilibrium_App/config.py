# config.py - Environment-driven settings for analysis runs
import os
import logging


def _env_float(name, default):
    return float(os.environ.get(name, default))


def _env_int(name, default):
    return int(os.environ.get(name, default))


class Config:
    """Base configuration class"""

    # Encoding parameters
    DEFAULT_EPSILON = _env_float('EQ_EPSILON', 1.5)
    DEFAULT_E_SWITCH = _env_float('EQ_E_SWITCH', 1.0)
    DEFAULT_BASE_RATE = _env_float('EQ_BASE_RATE', 1.0)

    # Numerics
    TOLERANCE = _env_float('EQ_TOLERANCE', 1e-9)

    # Exploration
    STATE_CAP = _env_int('EQ_STATE_CAP', 1_000_000)
    THREADS = _env_int('EQ_THREADS', 1)

    # Simulation
    DEFAULT_SEED = _env_int('EQ_SEED', 7)
    DEFAULT_EVENTS = _env_int('EQ_EVENTS', 100_000)

    # Logging
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'INFO')
    LOG_FILE = os.environ.get('EQ_LOG_FILE')
    LOG_FORMAT = '%(asctime)s %(levelname)s: %(message)s'

    # Schema files for input documents
    SCHEMA_DIR = os.environ.get('EQ_SCHEMA_DIR') or \
        os.path.join(os.path.dirname(os.path.abspath(__file__)), 'schemas')

    @classmethod
    def init_app(cls, settings=None):
        """Create directories the configured outputs need"""
        log_file = (settings or {}).get('LOG_FILE', cls.LOG_FILE)
        if log_file:
            os.makedirs(os.path.dirname(os.path.abspath(log_file)), exist_ok=True)


class DevelopmentConfig(Config):
    """Development configuration"""
    DEBUG = True


class TestingConfig(Config):
    """Testing configuration"""
    TESTING = True
    STATE_CAP = 200_000
    LOG_LEVEL = 'WARNING'


class ProductionConfig(Config):
    """Production configuration"""
    DEBUG = False
    LOG_LEVEL = 'WARNING'
    LOG_FILE = os.environ.get('EQ_LOG_FILE') or 'logs/equilibrium.log'


# Configuration dictionary
config = {
    'development': DevelopmentConfig,
    'testing': TestingConfig,
    'production': ProductionConfig,
    'default': DevelopmentConfig
}


def get_config():
    """Get configuration based on environment"""
    return config[os.getenv('EQUILIBRIUM_CONFIG', 'default')]


def configure_logging(settings=None, level=None):
    """Attach the stream handler (and file handler when configured) to the root logger"""
    settings = settings or get_config()
    settings.init_app()
    root = logging.getLogger()
    root.setLevel(level or settings.LOG_LEVEL)
    formatter = logging.Formatter(settings.LOG_FORMAT)

    if not any(getattr(h, '_equilibrium', False) for h in root.handlers):
        console_handler = logging.StreamHandler()
        console_handler.setFormatter(formatter)
        console_handler._equilibrium = True
        root.addHandler(console_handler)

        if settings.LOG_FILE:
            file_handler = logging.FileHandler(settings.LOG_FILE)
            file_handler.setFormatter(formatter)
            file_handler._equilibrium = True
            root.addHandler(file_handler)
    return root
