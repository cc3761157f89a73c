import os
from typing import Any

ENV_PREFIX = "DOORPASS_"

# ключ -> значение по умолчанию; переопределяется переменной DOORPASS_<ключ>
DEFAULTS = {
    "OUT_DIR": "out",
    "LOG_DIR": "logs",
    "CONFIG_DIR": "configs",
    "LOG_LEVEL": "INFO",
    "LOG_FORMAT": "string",  # или "json"
}


class SettingsLoader:
    """Пути и параметры процесса (не эксперимента); один экземпляр на процесс"""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
            cls._instance._initialize()
        return cls._instance

    def _initialize(self):
        self._config = {key: os.getenv(ENV_PREFIX + key, default)
                        for key, default in DEFAULTS.items()}

    def get(self, key: str, default: Any = None) -> Any:
        return self._config.get(key, default)

    def reload(self):
        self._initialize()
