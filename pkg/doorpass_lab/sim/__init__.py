"""Симуляция: дверь, робот, взаимодействие, награды, рандомизация, векторная среда"""
from .door_model import DoorSpec, DoorState, step_door
from .domain_rand import DomainRandomizer
from .env import DoorPassEnv, StepResult

__all__ = ['DoorSpec', 'DoorState', 'step_door', 'DomainRandomizer', 'DoorPassEnv', 'StepResult']
