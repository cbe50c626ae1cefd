"""
Named-tensor checkpoint archive

Layout (all integers little-endian):
    b"MFCK" | version u32 | count u64
    per tensor: name length u32 | UTF-8 name | rank u32 | dims u64 × rank | float32 × prod(dims)

Optimizer state is stored under the reserved "opt/" prefix.
"""

import io
import logging
import math
import struct
from pathlib import Path
from typing import Dict, Union

import numpy as np

from src.errors import CheckpointError

logger = logging.getLogger(__name__)

MAGIC = b"MFCK"
VERSION = 1
OPT_PREFIX = "opt/"


def write_archive(path: Union[str, Path], tensors: Dict[str, np.ndarray]) -> None:
    """Write named arrays in insertion order"""
    buffer = io.BytesIO()
    buffer.write(MAGIC)
    buffer.write(struct.pack("<IQ", VERSION, len(tensors)))
    for name, array in tensors.items():
        encoded = name.encode("utf-8")
        array = np.asarray(array)
        buffer.write(struct.pack("<I", len(encoded)))
        buffer.write(encoded)
        buffer.write(struct.pack("<I", array.ndim))
        if array.ndim:
            buffer.write(struct.pack(f"<{array.ndim}Q", *array.shape))
        buffer.write(np.ascontiguousarray(array, dtype="<f4").tobytes())

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(buffer.getvalue())
    logger.info(f"Wrote {len(tensors)} tensors to {path}")


def read_archive(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    """Read an archive written by write_archive; raises CheckpointError on any format problem"""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Checkpoint not found: {path}")
    raw = path.read_bytes()
    view = memoryview(raw)
    offset = 0

    def take(size: int) -> memoryview:
        nonlocal offset
        if offset + size > len(raw):
            raise CheckpointError(f"Checkpoint {path} is truncated at byte {offset}")
        chunk = view[offset:offset + size]
        offset += size
        return chunk

    if bytes(take(4)) != MAGIC:
        raise CheckpointError(f"{path} is not a matteforge checkpoint (bad magic)")
    version, count = struct.unpack("<IQ", take(12))
    if version != VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {version} in {path}, expected {VERSION}")

    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        try:
            name = bytes(take(name_len)).decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointError(f"Corrupt tensor name in {path}")
        (rank,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{rank}Q", take(8 * rank)) if rank else ()
        n = math.prod(dims)
        if 4 * n > len(raw) - offset:
            raise CheckpointError(f"Tensor {name!r} in {path} declares shape {dims}, larger than the remaining payload")
        try:
            data = np.frombuffer(take(4 * n), dtype="<f4").reshape(dims)
        except (ValueError, OverflowError) as e:
            raise CheckpointError(f"Corrupt shape {dims} for tensor {name!r} in {path}: {str(e)}")
        tensors[name] = data.astype(np.float32)
    if offset != len(raw):
        raise CheckpointError(f"Trailing bytes after {count} tensors in {path}")
    return tensors
