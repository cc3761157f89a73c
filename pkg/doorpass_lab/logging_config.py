import json
import logging
import logging.handlers
import os
from typing import Optional

from doorpass_lab.infra.settings import SettingsLoader

ROOT_LOGGER = 'doorpass'
LOG_FILE = 'actions.log'
TEXT_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'


class JsonLineFormatter(logging.Formatter):
    """Одна запись - одна строка JSON (для разбора журнала скриптами)"""

    def format(self, record: logging.LogRecord) -> str:
        payload = {
            "time": self.formatTime(record, DATE_FORMAT),
            "logger": record.name,
            "level": record.levelname,
            "message": record.getMessage(),
        }
        if record.exc_info:
            payload["exception"] = self.formatException(record.exc_info)
        return json.dumps(payload, ensure_ascii=False)


def _file_formatter(kind: str) -> logging.Formatter:
    if kind == "json":
        return JsonLineFormatter()
    return logging.Formatter(TEXT_FORMAT, datefmt=DATE_FORMAT)


def setup_logging(log_dir: Optional[str] = None) -> logging.Logger:
    """Ротируемый файл logs/actions.log (INFO) и консоль (WARNING)"""
    settings = SettingsLoader()
    log_dir = log_dir or settings.get("LOG_DIR", "logs")
    os.makedirs(log_dir, exist_ok=True)

    logger = logging.getLogger(ROOT_LOGGER)
    level = str(settings.get("LOG_LEVEL", "INFO")).upper()
    logger.setLevel(getattr(logging, level, logging.INFO))
    logger.propagate = False

    # повторная настройка заменяет обработчики
    for handler in list(logger.handlers):
        handler.close()
        logger.removeHandler(handler)

    file_handler = logging.handlers.RotatingFileHandler(
        os.path.join(log_dir, LOG_FILE),
        maxBytes=10 * 1024 * 1024,  # 10 MB
        backupCount=5,
        encoding='utf-8'
    )
    file_handler.setLevel(logging.INFO)
    file_handler.setFormatter(_file_formatter(settings.get("LOG_FORMAT", "string")))

    console_handler = logging.StreamHandler()
    console_handler.setLevel(logging.WARNING)
    console_handler.setFormatter(logging.Formatter('%(levelname)s: %(message)s'))

    logger.addHandler(file_handler)
    logger.addHandler(console_handler)
    return logger


def get_logger(name: str) -> logging.Logger:
    """Получить именованный логгер doorpass.<name>"""
    return logging.getLogger(f'{ROOT_LOGGER}.{name}')
