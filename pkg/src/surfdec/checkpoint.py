"""The ".tqck" checkpoint format.

Layout (little-endian):
  magic "TQCK" | version u32 | metadata-length u32 | metadata UTF-8 text
  | tensor count u32
  | per tensor: name-length u32, name bytes, rank u32, dims u32 each,
    float32 values.
Metadata is "key=value" lines describing the model config.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"TQCK"
VERSION = 1


class CheckpointFormatError(Exception):
    pass


def save_checkpoint(path, arrays: dict[str, np.ndarray], metadata: dict[str, str]):
    meta = "".join(f"{k}={v}\n" for k, v in metadata.items()).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(meta)))
        f.write(meta)
        f.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    with open(path, "rb") as f:
        raw = f.read()
    try:
        if raw[:4] != MAGIC:
            raise CheckpointFormatError(f"bad magic {raw[:4]!r}")
        version, meta_len = struct.unpack_from("<II", raw, 4)
        if version != VERSION:
            raise CheckpointFormatError(f"unsupported version {version}")
        off = 12
        metadata = {}
        for line in raw[off:off + meta_len].decode("utf-8").splitlines():
            if line:
                k, _, v = line.partition("=")
                metadata[k] = v
        off += meta_len
        (count,) = struct.unpack_from("<I", raw, off)
        off += 4
        arrays = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", raw, off)
            off += 4
            name = raw[off:off + nlen].decode("utf-8")
            off += nlen
            (rank,) = struct.unpack_from("<I", raw, off)
            off += 4
            dims = struct.unpack_from(f"<{rank}I", raw, off)
            off += 4 * rank
            size = int(np.prod(dims)) if rank else 1
            arr = np.frombuffer(raw, dtype="<f4", count=size, offset=off)
            off += 4 * size
            arrays[name] = arr.reshape(dims).copy()
        if off != len(raw):
            raise CheckpointFormatError(f"{len(raw) - off} trailing bytes")
    except (struct.error, UnicodeDecodeError, IndexError, ValueError) as e:
        raise CheckpointFormatError(f"truncated or corrupt checkpoint: {e}") from e
    return arrays, metadata
