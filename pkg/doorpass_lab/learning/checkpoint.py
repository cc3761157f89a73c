"""Версионированный контейнер параметров.

Формат: magic (8 байт) | длина заголовка uint32 LE | JSON-заголовок (utf-8) |
блоки параметров float32 little-endian в порядке, указанном в заголовке.
Заголовок хранит SHA-1 параметров (digest); при чтении он сверяется.
"""
import hashlib
import json
import math
import os
import struct
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from ..core.exceptions import CheckpointFormatError, CheckpointNotFoundError, LayoutMismatchError
from ..infra.storage import atomic_write_bytes
from ..logging_config import get_logger
from .nn import Params

logger = get_logger('checkpoint')

MAGIC = b"DPLCKPT1"
FORMAT_VERSION = 1
_DTYPE = np.dtype('<f4')


@dataclass
class Checkpoint:
    params: Params
    spec: Dict
    metadata: Dict

    @property
    def layout_version(self) -> str:
        return self.metadata.get("layout_version", "")


def params_digest(params: Params) -> str:
    """SHA-1 по именам, формам и байтам параметров (порядок по имени)"""
    h = hashlib.sha1()
    for name in sorted(params):
        block = np.ascontiguousarray(params[name], dtype=_DTYPE)
        h.update(name.encode('utf-8'))
        h.update(str(block.shape).encode('utf-8'))
        h.update(block.tobytes())
    return h.hexdigest()


def encode_checkpoint(params: Params, spec: Dict, metadata: Optional[Dict] = None) -> bytes:
    blocks, index, offset = [], [], 0
    for name in sorted(params):
        block = np.ascontiguousarray(params[name], dtype=_DTYPE)
        index.append({"name": name, "shape": list(block.shape), "offset": offset,
                      "count": int(block.size)})
        blocks.append(block.tobytes())
        offset += block.nbytes
    header = {"format": FORMAT_VERSION, "spec": spec, "metadata": dict(metadata or {}),
              "blocks": index, "digest": params_digest(params)}
    raw = json.dumps(header, sort_keys=True, ensure_ascii=False).encode('utf-8')
    return MAGIC + struct.pack('<I', len(raw)) + raw + b"".join(blocks)


def decode_checkpoint(data: bytes, path: str = "<bytes>") -> Checkpoint:
    if len(data) < len(MAGIC) + 4 or data[:len(MAGIC)] != MAGIC:
        raise CheckpointFormatError(path, "неверная сигнатура файла")
    (length,) = struct.unpack('<I', data[len(MAGIC):len(MAGIC) + 4])
    start = len(MAGIC) + 4
    if start + length > len(data):
        raise CheckpointFormatError(path, "заголовок обрезан")
    try:
        header = json.loads(data[start:start + length].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointFormatError(path, f"заголовок не читается: {e}")
    if header.get("format") != FORMAT_VERSION:
        raise CheckpointFormatError(path, f"неподдерживаемая версия формата {header.get('format')}")

    body = data[start + length:]
    params: Params = {}
    expected = 0
    for i, entry in enumerate(header.get("blocks", [])):
        try:
            name = str(entry["name"])
            count, offset = int(entry["count"]), int(entry["offset"])
            shape = tuple(int(d) for d in entry["shape"])
        except (KeyError, TypeError, ValueError) as e:
            raise CheckpointFormatError(path, f"запись блока {i} повреждена: {e!r}")
        if count < 0 or offset < 0 or math.prod(shape) != count:
            raise CheckpointFormatError(path, f"блок {name}: форма {list(shape)} "
                                              f"не согласуется с числом элементов {count}")
        end = offset + count * _DTYPE.itemsize
        if end > len(body):
            raise CheckpointFormatError(path, f"блок {name} обрезан")
        values = np.frombuffer(body[offset:end], dtype=_DTYPE).astype(np.float32)
        params[name] = values.reshape(shape)
        expected = max(expected, end)
    if expected != len(body):
        raise CheckpointFormatError(path, "лишние байты после блоков параметров")
    if header.get("digest") != params_digest(params):
        raise CheckpointFormatError(path, "контрольная сумма параметров не совпадает")
    return Checkpoint(params=params, spec=header.get("spec", {}),
                      metadata=header.get("metadata", {}))


def save_checkpoint(path: str, params: Params, spec: Dict, metadata: Optional[Dict] = None) -> str:
    atomic_write_bytes(path, encode_checkpoint(params, spec, metadata))
    logger.info(f"Чекпоинт сохранён: {path}")
    return path


def load_checkpoint(path: str, expected_layout: Optional[str] = None,
                    expected_kind: Optional[str] = None) -> Checkpoint:
    if not os.path.isfile(path):
        raise CheckpointNotFoundError(path)
    with open(path, 'rb') as f:
        checkpoint = decode_checkpoint(f.read(), path)
    if expected_layout is not None and checkpoint.layout_version != expected_layout:
        raise LayoutMismatchError(expected_layout, checkpoint.layout_version)
    if expected_kind is not None and checkpoint.spec.get("kind") != expected_kind:
        raise CheckpointFormatError(path, f"ожидалась сеть '{expected_kind}', "
                                          f"найдена '{checkpoint.spec.get('kind')}'")
    return checkpoint
