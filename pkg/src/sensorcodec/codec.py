"""ENCF container for encoded feature sets, and storage accounting.

Layout (little-endian)::

    magic      4 bytes  b"ENCF"
    version    u16
    dtype      u8       0 = float32, 1 = float64
    rank       u8
    dims       u32 * rank
    producer   u64      fingerprint of the model that produced the latents
    payload    row-major values
"""

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"ENCF"
VERSION = 1
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
DTYPE_CODES = {"f32": 0, "float32": 0, "f64": 1, "float64": 1}
MB = 1e6


class CodecError(ValueError):
    pass


def header_size(rank):
    return 4 + 2 + 1 + 1 + 4 * rank + 8


def _dtype_code(dtype):
    if isinstance(dtype, str) and dtype in DTYPE_CODES:
        return DTYPE_CODES[dtype]
    dt = np.dtype(dtype)
    for code, known in DTYPES.items():
        if dt == known:
            return code
    raise CodecError(f"unsupported dtype {dtype!r}")


def serialize_features(latent, model_fingerprint, path, dtype="f32"):
    """Write ``latent`` as an ENCF file; returns total bytes written."""
    arr = np.asarray(getattr(latent, "data", latent))
    if arr.ndim == 0:
        raise CodecError("cannot store a tensor without dimensions")
    if arr.ndim > 255:
        raise CodecError(f"rank {arr.ndim} exceeds 255")
    if 0 in arr.shape:
        raise CodecError(f"cannot store empty tensor of shape {arr.shape}")
    if any(d > 0xFFFFFFFF for d in arr.shape):
        raise CodecError("dimension exceeds u32")
    code = _dtype_code(dtype)
    payload = np.ascontiguousarray(arr, dtype=DTYPES[code])
    header = (MAGIC
              + struct.pack("<HBB", VERSION, code, arr.ndim)
              + struct.pack(f"<{arr.ndim}I", *arr.shape)
              + struct.pack("<Q", int(model_fingerprint) & 0xFFFFFFFFFFFFFFFF))
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes())
    os.replace(tmp, path)
    return len(header) + payload.nbytes


def deserialize_features(path):
    """Read an ENCF file; returns ``(array, producer_fingerprint)``."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8 or blob[:4] != MAGIC:
        raise CodecError(f"{path}: bad magic {blob[:4]!r}")
    version, code, rank = struct.unpack_from("<HBB", blob, 4)
    if version > VERSION:
        raise CodecError(f"{path}: format version {version} is newer than supported {VERSION}")
    if code not in DTYPES:
        raise CodecError(f"{path}: unknown dtype code {code}")
    hsize = header_size(rank)
    if len(blob) < hsize:
        raise CodecError(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{rank}I", blob, 8)
    (fp,) = struct.unpack_from("<Q", blob, 8 + 4 * rank)
    dt = DTYPES[code]
    expected = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
    got = len(blob) - hsize
    if got < expected:
        raise CodecError(f"{path}: truncated payload ({got} of {expected} bytes)")
    if got > expected:
        raise CodecError(f"{path}: {got - expected} trailing bytes after payload")
    arr = np.frombuffer(blob, dtype=dt, offset=hsize).reshape(dims)
    return arr.astype(dt.newbyteorder("="), copy=True), fp


def measure_size_mb(path):
    """File size in decimal megabytes (bytes / 1e6)."""
    return os.stat(path).st_size / MB


def compute_reduction(original_bytes, encoded_bytes):
    """Percent storage saved: 100 * (1 - encoded / original)."""
    if original_bytes <= 0:
        raise ValueError("original size must be positive")
    if encoded_bytes < 0:
        raise ValueError("encoded size must be non-negative")
    return 100.0 * (1.0 - encoded_bytes / original_bytes)


@dataclass(frozen=True)
class StorageReport:
    original_bytes: int
    encoded_bytes: int

    @property
    def original_mb(self):
        return self.original_bytes / MB

    @property
    def encoded_mb(self):
        return self.encoded_bytes / MB

    @property
    def reduction_percent(self):
        return compute_reduction(self.original_bytes, self.encoded_bytes)

    @classmethod
    def from_files(cls, original_path, encoded_path):
        return cls(os.stat(original_path).st_size, os.stat(encoded_path).st_size)

    def to_dict(self):
        return {
            "original_bytes": self.original_bytes,
            "encoded_bytes": self.encoded_bytes,
            "original_mb": self.original_mb,
            "encoded_mb": self.encoded_mb,
            "reduction_percent": self.reduction_percent,
        }
