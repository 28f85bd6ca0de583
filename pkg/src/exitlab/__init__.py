"""Exit problems for slowly changing, Markov-modulated small-noise diffusions."""
from .errors import *  # noqa: F401,F403
from .model import ModelSpec, load_model, model_from_config, validate_model  # noqa: F401
from .builtin import builtin_model  # noqa: F401

__version__ = "0.1.0"
