import hashlib
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from evmvuln import persist
from evmvuln.errors import BadMagic, ChecksumMismatch, ModelFileError, VersionMismatch


def test_golden_layout():
    blob = persist.dumps({"k": 1}, {"w": np.array([[1.0, 2.0]], np.float32)})
    body = (b"DLVA" + struct.pack("<HI", 1, 7) + b'{"k":1}' + struct.pack("<I", 1)
            + struct.pack("<H", 1) + b"w" + bytes([2]) + struct.pack("<2I", 1, 2)
            + struct.pack("<2f", 1.0, 2.0))
    assert blob == body + hashlib.sha256(body).digest()


tensor = hnp.arrays(np.float32, hnp.array_shapes(min_dims=0, max_dims=3, max_side=5),
                    elements=st.floats(-1e6, 1e6, width=32))


@given(st.dictionaries(st.text(min_size=1, max_size=8), tensor, max_size=4),
       st.dictionaries(st.text(max_size=5), st.integers() | st.text(max_size=5), max_size=3))
@settings(max_examples=60, deadline=None)
def test_roundtrip_is_exact(tensors, meta):
    back_meta, back = persist.loads(persist.dumps(meta, tensors))
    assert back_meta == meta
    assert list(back) == list(tensors)
    for k in tensors:
        assert back[k].dtype == np.float32 and back[k].shape == tensors[k].shape
        assert back[k].tobytes() == tensors[k].tobytes()


def blob():
    return persist.dumps({"kind": "x"}, {"a": np.arange(6, dtype=np.float32).reshape(2, 3)})


def test_bad_magic():
    with pytest.raises(BadMagic):
        persist.loads(b"NOPE" + blob()[4:])


@pytest.mark.parametrize("where", [10, 30, -40, -1])
def test_flipped_byte(where):
    b = bytearray(blob())
    b[where] ^= 0x01
    with pytest.raises(ChecksumMismatch):
        persist.loads(bytes(b))


@pytest.mark.parametrize("cut", [1, 20, 60])
def test_truncated(cut):
    with pytest.raises(ChecksumMismatch):
        persist.loads(blob()[:-cut])


def test_future_version():
    body = bytearray(blob()[:-32])
    body[4:6] = struct.pack("<H", 2)
    with pytest.raises(VersionMismatch):
        persist.loads(bytes(body) + hashlib.sha256(body).digest())


def test_errors_share_a_base():
    for cls in (BadMagic, ChecksumMismatch, VersionMismatch):
        assert issubclass(cls, ModelFileError)
