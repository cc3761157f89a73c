"""Инфраструктура: настройки процесса и каталог артефактов запуска"""
from .settings import SettingsLoader
from .storage import ArtifactStore

__all__ = ['SettingsLoader', 'ArtifactStore']
