import csv
import io
import json
import os
import tempfile
from typing import Dict, Iterable, List, Optional, Sequence

from ..core.exceptions import RunLockedError


class ArtifactStore:
    """Каталог артефактов одного запуска: out/<run-name>/"""

    LOCK_NAME = ".lock"

    def __init__(self, root: str, run_name: str, stamp: Optional[Dict] = None):
        self.run_dir = os.path.join(root, run_name)
        # (config_hash, seed, layout_version) - встраивается во все файлы
        self.stamp = dict(stamp or {})
        os.makedirs(self.run_dir, exist_ok=True)
        self._locked = False

    def path(self, name: str) -> str:
        return os.path.join(self.run_dir, name)

    # --- блокировка каталога ---
    def acquire(self):
        lock_path = self.path(self.LOCK_NAME)
        try:
            fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise RunLockedError(self.run_dir)
        with os.fdopen(fd, 'w') as f:
            f.write(str(os.getpid()))
        self._locked = True

    def release(self):
        if self._locked:
            try:
                os.unlink(self.path(self.LOCK_NAME))
            except FileNotFoundError:
                pass
            self._locked = False

    def __enter__(self):
        self.acquire()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.release()
        return False

    # --- запись ---
    def write_text(self, name: str, text: str) -> str:
        """Атомарная запись (через временный файл)"""
        target = self.path(name)
        temp_file = None
        try:
            with tempfile.NamedTemporaryFile(
                    mode='w',
                    dir=self.run_dir,
                    delete=False,
                    encoding='utf-8',
                    newline=''
            ) as f:
                f.write(text)
                temp_file = f.name
            os.replace(temp_file, target)
        except Exception:
            if temp_file and os.path.exists(temp_file):
                os.unlink(temp_file)
            raise
        return target

    def write_json(self, name: str, data: Dict) -> str:
        payload = {**data, "stamp": self.stamp} if self.stamp else data
        return self.write_text(name, json.dumps(payload, indent=2, sort_keys=True,
                                                ensure_ascii=False) + "\n")

    def append_jsonl(self, name: str, record: Dict):
        line = json.dumps({**self.stamp, **record}, sort_keys=True, ensure_ascii=False)
        with open(self.path(name), 'a', encoding='utf-8') as f:
            f.write(line + "\n")

    def reset_file(self, name: str):
        with open(self.path(name), 'w', encoding='utf-8'):
            pass

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
        return self.write_text(name, format_csv(header, rows, self.stamp))


def format_csv(header: Sequence[str], rows: Iterable[Sequence], stamp: Optional[Dict] = None) -> str:
    buffer = io.StringIO()
    if stamp:
        meta = ", ".join(f"{k}={stamp[k]}" for k in sorted(stamp))
        buffer.write(f"# {meta}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(list(header))
    for row in rows:
        writer.writerow([_csv_cell(v) for v in row])
    return buffer.getvalue()


def _csv_cell(value):
    if isinstance(value, float):
        return repr(float(value))
    if isinstance(value, (bool, int, str)) or value is None:
        return value
    # numpy скаляры
    if hasattr(value, 'item'):
        return _csv_cell(value.item())
    return value


def read_csv(path: str) -> List[Dict[str, str]]:
    with open(path, 'r', encoding='utf-8') as f:
        lines = [line for line in f if not line.startswith('#')]
    return list(csv.DictReader(lines))


def atomic_write_bytes(target: str, data: bytes) -> str:
    """Атомарная запись двоичного файла (чекпоинты)"""
    directory = os.path.dirname(os.path.abspath(target))
    os.makedirs(directory, exist_ok=True)
    temp_file = None
    try:
        with tempfile.NamedTemporaryFile(mode='wb', dir=directory, delete=False) as f:
            f.write(data)
            temp_file = f.name
        os.replace(temp_file, target)
    except Exception:
        if temp_file and os.path.exists(temp_file):
            os.unlink(temp_file)
        raise
    return target
