"""Minimal NPY v1.0 reader/writer for little-endian float matrices.

Only ``<f4`` and ``<f8`` in C order are accepted; anything else is a
:class:`~zslfeedback.errors.FormatError`.
"""

import ast
import struct

import numpy as np

from .errors import FormatError

MAGIC = b"\x93NUMPY"
_DESCRS = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}


def to_bytes(array, descr="<f8"):
    if descr not in _DESCRS:
        raise FormatError(f"unsupported dtype descr {descr!r}")
    a = np.ascontiguousarray(array, dtype=_DESCRS[descr])
    shape = repr(tuple(int(d) for d in a.shape))
    header = f"{{'descr': '{descr}', 'fortran_order': False, 'shape': {shape}, }}"
    # pad so that magic + version + length + header is a multiple of 64
    total = len(MAGIC) + 2 + 2 + len(header) + 1
    header += " " * (-total % 64) + "\n"
    if len(header) > 0xFFFF:
        raise FormatError("header too long for NPY v1.0")
    return MAGIC + b"\x01\x00" + struct.pack("<H", len(header)) + \
        header.encode("latin1") + a.tobytes(order="C")


def from_bytes(buf):
    buf = memoryview(buf)
    if len(buf) < 10:
        raise FormatError("truncated NPY preamble", len(buf))
    if bytes(buf[:6]) != MAGIC:
        raise FormatError("bad NPY magic", 0)
    major, minor = buf[6], buf[7]
    if (major, minor) != (1, 0):
        raise FormatError(f"unsupported NPY version {major}.{minor}", 6)
    (hlen,) = struct.unpack_from("<H", buf, 8)
    if 10 + hlen > len(buf):
        raise FormatError("truncated NPY header", len(buf))
    try:
        header = ast.literal_eval(bytes(buf[10:10 + hlen]).decode("latin1"))
    except (ValueError, SyntaxError) as exc:
        raise FormatError(f"unparseable NPY header: {exc}", 10) from exc
    if not isinstance(header, dict) or set(header) != {"descr", "fortran_order", "shape"}:
        raise FormatError("NPY header must have exactly descr/fortran_order/shape", 10)
    descr = header["descr"]
    if descr not in _DESCRS:
        raise FormatError(f"unsupported dtype descr {descr!r}", 10)
    if header["fortran_order"] is not False:
        raise FormatError("fortran_order arrays are not supported", 10)
    shape = header["shape"]
    if not isinstance(shape, tuple) or not all(isinstance(d, int) and d >= 0 for d in shape):
        raise FormatError(f"bad shape {shape!r}", 10)
    dtype = _DESCRS[descr]
    count = int(np.prod(shape, dtype=np.int64))
    start = 10 + hlen
    want = count * dtype.itemsize
    if len(buf) - start != want:
        raise FormatError(
            f"data section has {len(buf) - start} bytes, expected {want}", start)
    return np.frombuffer(buf, dtype=dtype, count=count, offset=start).reshape(shape).copy()


def write_npy(path, array, descr="<f8"):
    with open(path, "wb") as fh:
        fh.write(to_bytes(array, descr))


def read_npy(path):
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
