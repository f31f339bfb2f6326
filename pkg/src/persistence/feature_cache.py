"""
Feature cache files for vl-distill
Binary N x D float32 matrices with a JSON trailer (ids, texts, generator id, checksum)

Layout (little-endian):
    header   "VLMD" | version u32 | N u64 | D u64 | kind u8      (25 bytes)
    payload  N * D float32, row-major
    trailer  length u64 | UTF-8 JSON {checksum, generator_id, ids, meta, texts}
"""

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from src.core.embedding import FeatureKind, FeatureMatrix
from src.core.errors import CacheCorrupt, InputMissing, VersionUnsupported
from src.utils.logger import get_logger

logger = get_logger(__name__)

MAGIC = b"VLMD"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sIQQB")
TRAILER_LENGTH = struct.Struct("<Q")
PAYLOAD_DTYPE = np.dtype("<f4")


@dataclass
class CacheContents:
    """A decoded feature cache"""

    features: FeatureMatrix
    texts: Optional[List[str]] = None
    generator_id: str = ""
    meta: Dict[str, Any] = field(default_factory=dict)


def _checksum(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()


def encode_cache(
    features: FeatureMatrix,
    texts: Optional[Sequence[str]] = None,
    generator_id: str = "",
    meta: Optional[Dict[str, Any]] = None,
) -> bytes:
    """Serialize a feature matrix to the cache byte layout"""
    if texts is not None and len(texts) != features.rows:
        raise ValueError(f"{len(texts)} texts for {features.rows} rows")
    payload = np.ascontiguousarray(features.data, dtype=PAYLOAD_DTYPE).tobytes()
    trailer = json.dumps({
        "checksum": _checksum(payload),
        "generator_id": generator_id,
        "ids": list(features.ids),
        "meta": meta or {},
        "texts": list(texts) if texts is not None else None,
    }, sort_keys=True, ensure_ascii=False).encode("utf-8")
    header = HEADER.pack(MAGIC, FORMAT_VERSION, features.rows, features.dim, features.kind.code)
    return header + payload + TRAILER_LENGTH.pack(len(trailer)) + trailer


def decode_cache(blob: bytes, source: str = "<bytes>") -> CacheContents:
    """
    Parse and validate cache bytes

    Args:
        blob: File contents
        source: Name used in error messages

    Returns:
        CacheContents
    """
    if len(blob) < HEADER.size:
        raise CacheCorrupt(f"{source}: file shorter than the header", path=source)
    magic, version, rows, dim, kind_code = HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise CacheCorrupt(f"{source}: bad magic {magic!r}", path=source)
    if version != FORMAT_VERSION:
        raise VersionUnsupported(version, FORMAT_VERSION)
    try:
        kind = FeatureKind.from_code(kind_code)
    except ValueError:
        raise CacheCorrupt(f"{source}: unknown feature kind {kind_code}", path=source)

    payload_end = HEADER.size + rows * dim * PAYLOAD_DTYPE.itemsize
    if len(blob) < payload_end + TRAILER_LENGTH.size:
        raise CacheCorrupt(f"{source}: truncated payload", path=source)
    (trailer_length,) = TRAILER_LENGTH.unpack_from(blob, payload_end)
    trailer_start = payload_end + TRAILER_LENGTH.size
    if len(blob) != trailer_start + trailer_length:
        raise CacheCorrupt(f"{source}: expected {trailer_start + trailer_length} bytes, found {len(blob)}",
                           path=source)

    payload = blob[HEADER.size:payload_end]
    try:
        trailer = json.loads(blob[trailer_start:].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CacheCorrupt(f"{source}: unreadable trailer ({e})", path=source)
    if trailer.get("checksum") != _checksum(payload):
        raise CacheCorrupt(f"{source}: payload checksum mismatch", path=source)

    ids = trailer.get("ids") or []
    if len(ids) != rows:
        raise CacheCorrupt(f"{source}: {len(ids)} ids for {rows} rows", path=source)
    data = np.frombuffer(payload, dtype=PAYLOAD_DTYPE).reshape(rows, dim).astype(np.float64)
    return CacheContents(
        features=FeatureMatrix(data, tuple(ids), kind),
        texts=trailer.get("texts"),
        generator_id=trailer.get("generator_id", ""),
        meta=trailer.get("meta") or {},
    )


def atomic_write_bytes(path: Path, data: bytes):
    """Write to a sibling temp file, then rename over the target"""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp-{os.getpid()}")
    with open(tmp, "wb") as f:
        f.write(data)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


def cache_write(
    path: str,
    features: FeatureMatrix,
    texts: Optional[Sequence[str]] = None,
    generator_id: str = "",
    meta: Optional[Dict[str, Any]] = None,
) -> Path:
    """
    Write a feature cache file

    Args:
        path: Output file
        features: Matrix to store (written as float32)
        texts: Optional source text per row (text caches)
        generator_id: Identifier of the model that produced the features
        meta: Extra JSON-serializable metadata

    Returns:
        Path written
    """
    target = Path(path)
    atomic_write_bytes(target, encode_cache(features, texts, generator_id, meta))
    logger.debug(f"Wrote {features.rows}x{features.dim} {features.kind.value} cache to {target}")
    return target


def cache_read(path: str) -> CacheContents:
    """
    Read and validate a feature cache file

    Args:
        path: Cache file

    Returns:
        CacheContents
    """
    source = Path(path)
    if not source.is_file():
        raise InputMissing(f"Feature cache not found: {path}", path=str(path))
    return decode_cache(source.read_bytes(), str(source))
