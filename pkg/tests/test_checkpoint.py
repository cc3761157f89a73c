import json
import struct

import numpy as np
import pytest

from doorpass_lab.core.exceptions import (CheckpointFormatError, CheckpointNotFoundError,
                                          LayoutMismatchError)
from doorpass_lab.learning.checkpoint import (MAGIC, decode_checkpoint, encode_checkpoint,
                                              load_checkpoint, params_digest, save_checkpoint)


@pytest.fixture
def params():
    rng = np.random.default_rng(0)
    return {"actor.0.W": rng.normal(size=(4, 3)).astype(np.float32),
            "actor.0.b": np.zeros(3, dtype=np.float32),
            "log_std": np.full(2, -0.5, dtype=np.float32)}


SPEC = {"kind": "actor_critic", "obs_dim": 4}
META = {"layout_version": "obs-v1", "seed": 0}


def test_round_trip_is_bit_identical(tmp_path, params):
    path = str(tmp_path / "net.ckpt")
    save_checkpoint(path, params, SPEC, META)
    loaded = load_checkpoint(path, expected_layout="obs-v1", expected_kind="actor_critic")
    assert set(loaded.params) == set(params)
    for name, value in params.items():
        assert loaded.params[name].tobytes() == value.tobytes()
        assert loaded.params[name].shape == value.shape
    assert loaded.spec == SPEC
    assert loaded.layout_version == "obs-v1"
    assert params_digest(loaded.params) == params_digest(params)


def test_encoding_is_deterministic(params):
    assert encode_checkpoint(params, SPEC, META) == encode_checkpoint(dict(params), SPEC, META)


def test_wrong_magic_rejected(params):
    data = encode_checkpoint(params, SPEC, META)
    with pytest.raises(CheckpointFormatError):
        decode_checkpoint(b"NOTACKPT" + data[len(MAGIC):])


def test_truncated_body_rejected(params):
    data = encode_checkpoint(params, SPEC, META)
    with pytest.raises(CheckpointFormatError):
        decode_checkpoint(data[:-4])


def test_layout_mismatch_rejected(tmp_path, params):
    path = str(tmp_path / "net.ckpt")
    save_checkpoint(path, params, SPEC, META)
    with pytest.raises(LayoutMismatchError):
        load_checkpoint(path, expected_layout="obs-v2")


def test_wrong_network_kind_rejected(tmp_path, params):
    path = str(tmp_path / "net.ckpt")
    save_checkpoint(path, params, SPEC, META)
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(path, expected_kind="student")


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointNotFoundError):
        load_checkpoint(str(tmp_path / "absent.ckpt"))


def rewrite_header(data, edit):
    """Пересобрать файл с изменённым заголовком (тело без изменений)"""
    start = len(MAGIC) + 4
    (length,) = struct.unpack('<I', data[len(MAGIC):start])
    header = json.loads(data[start:start + length].decode('utf-8'))
    edit(header)
    raw = json.dumps(header, sort_keys=True).encode('utf-8')
    return MAGIC + struct.pack('<I', len(raw)) + raw + data[start + length:]


def block(header, name):
    return next(entry for entry in header["blocks"] if entry["name"] == name)


def test_shape_inconsistent_with_count_rejected(params):
    data = rewrite_header(encode_checkpoint(params, SPEC, META),
                          lambda h: block(h, "actor.0.W").update(shape=[4, 4]))
    with pytest.raises(CheckpointFormatError, match="actor.0.W"):
        decode_checkpoint(data)


def test_block_entry_without_count_rejected(params):
    data = rewrite_header(encode_checkpoint(params, SPEC, META),
                          lambda h: block(h, "log_std").pop("count"))
    with pytest.raises(CheckpointFormatError):
        decode_checkpoint(data)


def test_flipped_body_byte_rejected(tmp_path, params):
    data = bytearray(encode_checkpoint(params, SPEC, META))
    data[-3] ^= 0x01
    path = tmp_path / "net.ckpt"
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointFormatError) as excinfo:
        load_checkpoint(str(path))
    assert excinfo.value.kind == "checkpoint corrupt"
