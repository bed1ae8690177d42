"""Config-driven experiment runners behind the ``qml`` command."""

from .config import EXPERIMENTS, config_hash, resolve
from .record import ExperimentRecord, Table, emit
from .runners import DEFAULTS, run
from .cli import load

__all__ = ["DEFAULTS", "EXPERIMENTS", "ExperimentRecord", "Table", "config_hash", "emit", "load", "resolve", "run"]
