"""Командный интерфейс лаборатории"""

from .interface import main

__all__ = ['main']
