"""The .dwt tensor container and key=value manifests.

Layout: 8-byte magic ``DWTENS01``, one dtype byte (0=f32, 1=f64, 2=i32,
3=u8), one rank byte, little-endian u32 dims, then the raw little-endian
payload. Round trips are bit-exact.
"""

import os

import numpy as np

MAGIC = b"DWTENS01"

_CODE_TO_DTYPE = {0: "<f4", 1: "<f8", 2: "<i4", 3: "|u1"}
_KIND_TO_CODE = {
    np.dtype(np.float32): 0,
    np.dtype(np.float64): 1,
    np.dtype(np.int32): 2,
    np.dtype(np.uint8): 3,
}


class DwtError(Exception):
    """Base error for container problems."""


class BadMagicError(DwtError):
    pass


class TruncatedPayloadError(DwtError):
    pass


class SchemaError(DwtError):
    """Shape/dtype does not match what the caller expected."""


def write_tensor(path, array: np.ndarray) -> None:
    array = np.asarray(array)
    code = _KIND_TO_CODE.get(array.dtype)
    if code is None:
        raise SchemaError(f"dtype {array.dtype} not storable; use one of "
                          f"{sorted(str(d) for d in _KIND_TO_CODE)}")
    if array.ndim > 255:
        raise SchemaError(f"rank {array.ndim} exceeds container limit")
    header = bytearray(MAGIC)
    header.append(code)
    header.append(array.ndim)
    header += np.asarray(array.shape, "<u4").tobytes()
    payload = np.ascontiguousarray(array).astype(
        _CODE_TO_DTYPE[code], copy=False).tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(header))
        fh.write(payload)


def read_tensor(path, expect_shape=None, expect_dtype=None) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 2:
        raise TruncatedPayloadError(f"{path}: file shorter than header")
    if blob[:len(MAGIC)] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {blob[:len(MAGIC)]!r}, "
                            f"expected {MAGIC!r}")
    code = blob[len(MAGIC)]
    rank = blob[len(MAGIC) + 1]
    if code not in _CODE_TO_DTYPE:
        raise SchemaError(f"{path}: unknown dtype code {code}")
    off = len(MAGIC) + 2
    if len(blob) < off + 4 * rank:
        raise TruncatedPayloadError(f"{path}: header truncated "
                                    f"(rank {rank}, {len(blob)} bytes)")
    dims = np.frombuffer(blob, "<u4", count=rank, offset=off)
    off += 4 * rank
    dtype = np.dtype(_CODE_TO_DTYPE[code])
    n = int(np.prod(dims, dtype=np.int64)) if rank else 1
    need = n * dtype.itemsize
    if len(blob) - off < need:
        raise TruncatedPayloadError(
            f"{path}: payload truncated, need {need} bytes, have "
            f"{len(blob) - off}")
    arr = np.frombuffer(blob, dtype, count=n, offset=off).reshape(
        tuple(int(d) for d in dims))
    arr = arr.astype(dtype.newbyteorder("="), copy=True)
    if expect_shape is not None and arr.shape != tuple(expect_shape):
        raise SchemaError(f"{path}: shape {arr.shape}, expected "
                          f"{tuple(expect_shape)}")
    if expect_dtype is not None and arr.dtype != np.dtype(expect_dtype):
        raise SchemaError(f"{path}: dtype {arr.dtype}, expected "
                          f"{np.dtype(expect_dtype)}")
    return arr


def write_manifest(path, mapping: dict) -> None:
    lines = [f"{k}={v}\n" for k, v in mapping.items()]
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(lines)


def read_manifest(path) -> dict:
    if not os.path.exists(path):
        raise DwtError(f"manifest {path} not found")
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DwtError(f"manifest {path}: malformed line {line!r}")
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out
