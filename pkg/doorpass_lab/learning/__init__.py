"""Сети на numpy, чекпоинты, обучение учителя (PPO) и дистилляция ученика"""
from .checkpoint import load_checkpoint, save_checkpoint
from .distill import train_student
from .nn import ActorCritic, Adam, Student
from .policies import StudentPolicy, TeacherPolicy, load_policy
from .ppo import train_teacher

__all__ = [
    'ActorCritic',
    'Adam',
    'Student',
    'TeacherPolicy',
    'StudentPolicy',
    'load_policy',
    'load_checkpoint',
    'save_checkpoint',
    'train_teacher',
    'train_student',
]
