"""Tests for the binary feature cache format"""

import struct

import numpy as np
import pytest

from src.core.embedding import FeatureKind, FeatureMatrix
from src.core.errors import CacheCorrupt, InputMissing, VersionUnsupported
from src.persistence.feature_cache import HEADER, MAGIC, cache_read, cache_write, decode_cache, encode_cache


def float32_matrix(rows, dim, seed=0, kind=FeatureKind.STUDENT_VISUAL):
    data = np.random.default_rng(seed).standard_normal((rows, dim)).astype(np.float32).astype(np.float64)
    return FeatureMatrix(data, tuple(f"s{i}" for i in range(rows)), kind)


def test_round_trip_bit_identical(tmp_path):
    matrix = float32_matrix(16, 8)
    path = cache_write(str(tmp_path / "m.vlmd"), matrix, generator_id="gen", meta={"split": "train"})
    contents = cache_read(str(path))
    assert contents.features.data.tobytes() == matrix.data.tobytes()
    assert contents.features.ids == matrix.ids
    assert contents.features.kind == FeatureKind.STUDENT_VISUAL
    assert contents.generator_id == "gen"
    assert contents.meta == {"split": "train"}
    assert contents.texts is None


def test_text_cache_keeps_texts():
    matrix = float32_matrix(2, 3, kind=FeatureKind.TEXT)
    contents = decode_cache(encode_cache(matrix, texts=["a photo of a", "b"]))
    assert contents.texts == ["a photo of a", "b"]
    assert contents.features.kind == FeatureKind.TEXT


def test_header_layout_on_2x2():
    matrix = FeatureMatrix(np.array([[1.0, 2.0], [3.0, 4.0]]), ("a", "b"), FeatureKind.TEACHER_VISUAL)
    blob = encode_cache(matrix)
    assert HEADER.size == 25
    assert blob[0:4] == b"VLMD"
    assert struct.unpack_from("<I", blob, 4)[0] == 1
    assert struct.unpack_from("<Q", blob, 8)[0] == 2
    assert struct.unpack_from("<Q", blob, 16)[0] == 2
    assert blob[24] == FeatureKind.TEACHER_VISUAL.code
    payload = blob[25:25 + 16]
    assert np.frombuffer(payload, dtype="<f4").tolist() == [1.0, 2.0, 3.0, 4.0]
    (trailer_length,) = struct.unpack_from("<Q", blob, 41)
    assert len(blob) == 25 + 16 + 8 + trailer_length


def test_truncated_payload_raises():
    blob = encode_cache(float32_matrix(4, 4))
    with pytest.raises(CacheCorrupt):
        decode_cache(blob[:-1])
    with pytest.raises(CacheCorrupt):
        decode_cache(blob[:30])


def test_bad_magic_raises():
    blob = bytearray(encode_cache(float32_matrix(2, 2)))
    blob[0:4] = b"XXXX"
    with pytest.raises(CacheCorrupt):
        decode_cache(bytes(blob))


def test_checksum_mismatch_raises():
    blob = bytearray(encode_cache(float32_matrix(2, 2)))
    blob[HEADER.size] ^= 0x01
    with pytest.raises(CacheCorrupt):
        decode_cache(bytes(blob))


def test_unknown_version_raises():
    blob = bytearray(encode_cache(float32_matrix(2, 2)))
    struct.pack_into("<I", blob, 4, 99)
    with pytest.raises(VersionUnsupported):
        decode_cache(bytes(blob))


def test_missing_file(tmp_path):
    with pytest.raises(InputMissing):
        cache_read(str(tmp_path / "absent.vlmd"))


def test_write_is_deterministic(tmp_path):
    matrix = float32_matrix(3, 5, seed=4)
    first = cache_write(str(tmp_path / "a.vlmd"), matrix).read_bytes()
    second = cache_write(str(tmp_path / "b.vlmd"), matrix).read_bytes()
    assert first == second
    assert first.startswith(MAGIC)
