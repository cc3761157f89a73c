from typing import Optional


class DoorpassError(Exception):
    """Базовая ошибка лаборатории; kind - класс отказа для CLI"""

    kind = "error"


class ConfigError(DoorpassError):
    kind = "config parse"

    def __init__(self, key: str, reason: str):
        self.key = key
        self.reason = reason
        super().__init__(f"Некорректная конфигурация '{key}': {reason}")


class InvalidRangeError(ConfigError):
    def __init__(self, name: str, lo: float, hi: float):
        self.name = name
        self.lo = lo
        self.hi = hi
        super().__init__(name, f"диапазон [{lo}, {hi}] некорректен")


class CheckpointNotFoundError(DoorpassError):
    kind = "checkpoint not found"

    def __init__(self, path: str):
        self.path = path
        super().__init__(f"Чекпоинт не найден: {path}")


class CheckpointFormatError(DoorpassError):
    kind = "checkpoint corrupt"

    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"Повреждённый чекпоинт {path}: {reason}")


class LayoutMismatchError(DoorpassError):
    kind = "checkpoint mismatch"

    def __init__(self, expected: str, found: str):
        self.expected = expected
        self.found = found
        super().__init__(f"Версия раскладки наблюдений {found!r}, ожидалась {expected!r}")


class ShapeMismatchError(DoorpassError):
    kind = "shape mismatch"

    def __init__(self, where: str, expected, found):
        self.where = where
        self.expected = expected
        self.found = found
        super().__init__(f"{where}: ожидалась форма {expected}, получена {found}")


class NumericalError(DoorpassError):
    kind = "NaN abort"

    def __init__(self, where: str):
        self.where = where
        super().__init__(f"Нечисловые значения (NaN/inf) на входе: {where}")


class TrainingDivergedError(DoorpassError):
    kind = "NaN abort"

    def __init__(self, stage: str, step: int, diagnostics: Optional[dict] = None):
        self.stage = stage
        self.step = step
        self.diagnostics = diagnostics or {}
        super().__init__(f"Обучение '{stage}' разошлось на шаге {step}: {self.diagnostics}")


class RunLockedError(DoorpassError):
    kind = "run locked"

    def __init__(self, path: str):
        self.path = path
        super().__init__(f"Каталог запуска занят другим процессом: {path}")


class ReplayMismatchError(DoorpassError):
    kind = "replay mismatch"

    def __init__(self, path: str, line: int):
        self.path = path
        self.line = line
        super().__init__(f"Трасса расходится с записью {path} в строке {line}")
