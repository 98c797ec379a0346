import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from zslfeedback.errors import FormatError
from zslfeedback.npyio import from_bytes, read_npy, to_bytes, write_npy

shapes = st.tuples(st.integers(0, 6), st.integers(0, 6))
stored = st.one_of(arrays(np.dtype("<f4"), shapes), arrays(np.dtype("<f8"), shapes))


@given(stored)
def test_round_trip_bit_exact(a):
    descr = a.dtype.str
    back = from_bytes(to_bytes(a, descr))
    assert back.dtype == np.dtype(descr) and back.shape == a.shape
    assert back.tobytes() == a.tobytes()  # bitwise, NaN payloads included


@given(stored)
def test_agrees_with_numpy(a):
    descr = a.dtype.str
    buf = to_bytes(a, descr)
    theirs = np.load(io.BytesIO(buf), allow_pickle=False)
    assert theirs.dtype == np.dtype(descr)
    assert theirs.tobytes() == a.astype(descr).tobytes()
    out = io.BytesIO()
    np.save(out, a.astype(descr))
    assert from_bytes(out.getvalue()).tobytes() == a.astype(descr).tobytes()


def test_header_alignment():
    buf = to_bytes(np.zeros((3, 2)))
    hlen = int.from_bytes(buf[8:10], "little")
    assert (10 + hlen) % 64 == 0 and buf[9 + hlen:10 + hlen] == b"\n"


def test_file_round_trip(tmp_path):
    a = np.arange(12.0).reshape(3, 4)
    write_npy(tmp_path / "a.npy", a, "<f4")
    assert np.array_equal(read_npy(tmp_path / "a.npy"), a)


def test_rejections():
    buf = to_bytes(np.ones((2, 2)))
    with pytest.raises(FormatError, match="magic"):
        from_bytes(b"\x93NUMPX" + buf[6:])
    with pytest.raises(FormatError, match="version"):
        from_bytes(buf[:6] + b"\x02\x00" + buf[8:])
    with pytest.raises(FormatError, match="data section"):
        from_bytes(buf[:-1])
    with pytest.raises(FormatError):
        from_bytes(buf[:5])
    with pytest.raises(FormatError, match="descr"):
        to_bytes(np.ones(2), "<i4")
    out = io.BytesIO()
    np.save(out, np.ones((2, 2), dtype="<i8"))
    with pytest.raises(FormatError, match="descr"):
        from_bytes(out.getvalue())
    out = io.BytesIO()
    np.save(out, np.asfortranarray(np.ones((2, 3))))
    with pytest.raises(FormatError, match="fortran"):
        from_bytes(out.getvalue())
    out = io.BytesIO()
    np.save(out, np.ones(2, dtype=">f8"))
    with pytest.raises(FormatError):
        from_bytes(out.getvalue())
