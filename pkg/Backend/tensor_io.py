"""Binary codec for the FDPN tensor file and the checkpoint container.

Tensor file (little-endian):
    magic b"FDPN" | version u32 | rank u32 | dims u32 * rank | float32 payload (row-major)

Checkpoint container (little-endian):
    magic b"FDPK" | version u32 | metadata length u32 | metadata (UTF-8 JSON)
    | entry count u32 | entries
    entry: name length u32 | name (UTF-8) | rank u32 | dims u32 * rank | float32 payload
"""
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np

from Backend.errors import FormatError, ReadError, WriteError

logger = logging.getLogger(__name__)

TENSOR_MAGIC = b"FDPN"
CONTAINER_MAGIC = b"FDPK"
FORMAT_VERSION = 1

_U32 = np.dtype("<u4")
_F32 = np.dtype("<f4")

PathLike = Union[str, os.PathLike]


def _read_u32(buf: bytes, offset: int, count: int = 1) -> Tuple[np.ndarray, int]:
    end = offset + 4 * count
    if end > len(buf):
        raise FormatError(f"truncated header: need {end} bytes, have {len(buf)}")
    if count == 0:
        return np.zeros(0, dtype=_U32), offset
    return np.frombuffer(buf, dtype=_U32, count=count, offset=offset), end


def _encode_record(array: np.ndarray) -> bytes:
    array = np.ascontiguousarray(array, dtype=_F32)
    header = np.array([array.ndim, *array.shape], dtype=_U32)
    return header.tobytes() + array.tobytes(order="C")


def _decode_record(buf: bytes, offset: int) -> Tuple[np.ndarray, int]:
    (rank,), offset = _read_u32(buf, offset)
    dims, offset = _read_u32(buf, offset, int(rank))
    shape = tuple(int(d) for d in dims)
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    end = offset + 4 * count
    if end > len(buf):
        raise FormatError(
            f"payload size mismatch: header dims {shape} need {4 * count} bytes, "
            f"only {len(buf) - offset} available"
        )
    if count == 0:
        return np.zeros(shape, dtype=np.float32), end
    values = np.frombuffer(buf, dtype=_F32, count=count, offset=offset)
    return values.reshape(shape).astype(np.float32), end


def encode_tensor(array: np.ndarray) -> bytes:
    return TENSOR_MAGIC + np.array([FORMAT_VERSION], dtype=_U32).tobytes() + _encode_record(array)


def decode_tensor(buf: bytes) -> np.ndarray:
    if len(buf) < 8:
        raise FormatError(f"file too short for an FDPN header ({len(buf)} bytes)")
    if buf[:4] != TENSOR_MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {TENSOR_MAGIC!r}")
    (version,), offset = _read_u32(buf, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}")
    array, end = _decode_record(buf, offset)
    if end != len(buf):
        raise FormatError(f"payload size mismatch: {len(buf) - end} trailing bytes")
    return array


def write_tensor(path: PathLike, array: np.ndarray) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_tensor(array))
    except OSError as e:
        raise WriteError(f"could not write {path}: {e}") from e


def _read_bytes(path: PathLike) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise ReadError(f"could not read {path}: {e}") from e


def read_tensor(path: PathLike) -> np.ndarray:
    return decode_tensor(_read_bytes(path))


def write_container(path: PathLike, tensors: Dict[str, np.ndarray], metadata: Dict[str, Any]) -> None:
    meta = json.dumps(metadata, sort_keys=True).encode("utf-8")
    parts = [
        CONTAINER_MAGIC,
        np.array([FORMAT_VERSION, len(meta)], dtype=_U32).tobytes(),
        meta,
        np.array([len(tensors)], dtype=_U32).tobytes(),
    ]
    for name in sorted(tensors):
        encoded = name.encode("utf-8")
        parts.append(np.array([len(encoded)], dtype=_U32).tobytes())
        parts.append(encoded)
        parts.append(_encode_record(tensors[name]))
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp.write_bytes(b"".join(parts))
        os.replace(tmp, path)
    except OSError as e:
        raise WriteError(f"could not write {path}: {e}") from e
    logger.debug(f"Wrote container {path} with {len(tensors)} tensors")


def read_container(path: PathLike) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    buf = _read_bytes(path)
    if len(buf) < 4 or buf[:4] != CONTAINER_MAGIC:
        raise FormatError(f"{path}: not an FDPN checkpoint container")
    (version, meta_len), offset = _read_u32(buf, 4, 2)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported container version {version}")
    meta_end = offset + int(meta_len)
    if meta_end > len(buf):
        raise FormatError(f"{path}: truncated metadata block")
    try:
        metadata = json.loads(buf[offset:meta_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: unreadable metadata block: {e}") from e
    (count,), offset = _read_u32(buf, meta_end)
    tensors = {}
    for _ in range(int(count)):
        (name_len,), offset = _read_u32(buf, offset)
        name_end = offset + int(name_len)
        if name_end > len(buf):
            raise FormatError(f"{path}: truncated entry name")
        name = buf[offset:name_end].decode("utf-8")
        tensors[name], offset = _decode_record(buf, name_end)
    if offset != len(buf):
        raise FormatError(f"{path}: {len(buf) - offset} trailing bytes")
    return tensors, metadata
