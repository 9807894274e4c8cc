"""PMT1 tensor file format.

Layout: 4-byte magic ``PMT1``, uint32 little-endian rank, rank uint32
little-endian dims, then the row-major payload as little-endian float32.
Used for checkpoints, dataset images and precomputed feature maps.
"""

import struct

import numpy as np

from .errors import FormatError

MAGIC = b"PMT1"


def save_array(path, arr):
    arr = np.ascontiguousarray(arr, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def load_array(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    if len(blob) < 8:
        raise FormatError(f"{path}: truncated header")
    (rank,) = struct.unpack_from("<I", blob, 4)
    header_end = 8 + 4 * rank
    if len(blob) < header_end:
        raise FormatError(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{rank}I", blob, 8)
    count = int(np.prod(dims)) if rank else 1
    payload = blob[header_end:]
    if len(payload) != 4 * count:
        raise FormatError(
            f"{path}: truncated payload, expected {4 * count} bytes, got {len(payload)}"
        )
    return np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
