"""Конфигурация эксперимента и иерархия ошибок"""
from .config import ExperimentConfig, apply_overrides, config_hash, load_config
from .exceptions import (CheckpointFormatError, CheckpointNotFoundError, ConfigError,
                         DoorpassError, LayoutMismatchError, NumericalError,
                         TrainingDivergedError)

__all__ = [
    'ExperimentConfig',
    'apply_overrides',
    'config_hash',
    'load_config',
    'DoorpassError',
    'ConfigError',
    'CheckpointNotFoundError',
    'CheckpointFormatError',
    'LayoutMismatchError',
    'NumericalError',
    'TrainingDivergedError',
]
