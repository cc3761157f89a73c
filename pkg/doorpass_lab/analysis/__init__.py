"""Протоколы оценки обученных политик"""
from . import evaluation

__all__ = ['evaluation']
