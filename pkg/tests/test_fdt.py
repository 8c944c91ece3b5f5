"""FDT binary tensor format: round trips, rejection, hand-encoded fixture."""
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freqfuse.errors import FdtError
from freqfuse.tensor import Tensor, read_fdt, write_fdt


def test_roundtrip_bit_exact_f32(tmp_path, rng):
    t = Tensor(rng.standard_normal((2, 3, 4, 5)), dtype="f32")
    path = tmp_path / "t.fdt"
    write_fdt(path, t)
    back = read_fdt(path)
    assert back.dtype == "f32"
    assert np.array_equal(back.data, t.data)
    assert back.data.tobytes() == t.data.tobytes()


def test_roundtrip_bit_exact_f64(tmp_path, rng):
    t = Tensor(rng.standard_normal((1, 2, 8, 8)), dtype="f64")
    path = tmp_path / "t.fdt"
    write_fdt(path, t)
    assert read_fdt(path).data.tobytes() == t.data.tobytes()


@settings(max_examples=25, deadline=None)
@given(shape=st.tuples(st.integers(1, 3), st.integers(1, 4), st.integers(1, 5), st.integers(1, 5)),
       dtype=st.sampled_from(["f32", "f64"]), seed=st.integers(0, 2**16))
def test_roundtrip_property(tmp_path_factory, shape, dtype, seed):
    t = Tensor(np.random.default_rng(seed).standard_normal(shape), dtype=dtype)
    path = tmp_path_factory.mktemp("fdt") / "x.fdt"
    write_fdt(path, t)
    back = read_fdt(path)
    assert back.shape == shape and back.data.tobytes() == t.data.tobytes()


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.fdt"
    path.write_bytes(b"FDX1" + bytes(40))
    with pytest.raises(FdtError, match="not an FDT file"):
        read_fdt(path)


def test_truncated_payload_reports_counts(tmp_path, rng):
    t = Tensor(rng.standard_normal((1, 1, 2, 2)), dtype="f32")
    path = tmp_path / "trunc.fdt"
    write_fdt(path, t)
    blob = path.read_bytes()
    path.write_bytes(blob[:-3])
    with pytest.raises(FdtError, match="expected"):
        read_fdt(path)


def test_wrong_rank_rejected(tmp_path):
    path = tmp_path / "rank.fdt"
    path.write_bytes(b"FDT1" + bytes([0, 3]) + struct.pack("<4Q", 1, 1, 1, 1) + bytes(4))
    with pytest.raises(FdtError, match="rank"):
        read_fdt(path)


def test_unknown_dtype_code_rejected(tmp_path):
    path = tmp_path / "code.fdt"
    path.write_bytes(b"FDT1" + bytes([9, 4]) + struct.pack("<4Q", 1, 1, 1, 1) + bytes(4))
    with pytest.raises(FdtError, match="dtype"):
        read_fdt(path)


def test_hand_encoded_fixture(tmp_path):
    # magic, dtype f32, rank 4, extents 1x1x1x2, payload [1.0, 2.0] little-endian
    blob = b"FDT1" + bytes([0, 4]) + struct.pack("<4Q", 1, 1, 1, 2) + struct.pack("<2f", 1.0, 2.0)
    path = tmp_path / "hand.fdt"
    path.write_bytes(blob)
    t = read_fdt(path)
    assert t.shape == (1, 1, 1, 2)
    assert t.dtype == "f32"
    assert t.data.reshape(-1).tolist() == [1.0, 2.0]
