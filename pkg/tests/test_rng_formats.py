import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from warpattn import tnsr
from warpattn.imageio import PpmFormatError, decode_ppm, encode_ppm, read_ppm, write_ppm
from warpattn.rng import SeededRng
from warpattn.tensor import Tensor

# published pcg32 demo output for pcg32_srandom(42, 54)
PCG32_REFERENCE = [0xA15C02B7, 0x7B47F409, 0xBA1D3330, 0x83D2F293, 0xBFA4784B, 0xCBED606E]


def test_pcg32_reference_vector():
    assert SeededRng(42).next_u32(6).tolist() == PCG32_REFERENCE


def test_block_draws_equal_one_at_a_time():
    a, b = SeededRng(9), SeededRng(9)
    whole = a.next_u32(50)
    parts = np.concatenate([b.next_u32(1) for _ in range(20)] + [b.next_u32(30)])
    np.testing.assert_array_equal(whole, parts)


def test_uniform_range_and_streams():
    r = SeededRng(3)
    u = r.uniform((1000,), -2.0, 5.0)
    assert u.min() >= -2.0 and u.max() < 5.0
    assert not np.array_equal(r.spawn(1).uniform(8), r.spawn(2).uniform(8))
    np.testing.assert_array_equal(SeededRng(3).spawn(1).uniform(8), SeededRng(3).spawn(1).uniform(8))


def test_normal_moments():
    z = SeededRng(5).normal((20000,))
    assert abs(z.mean()) < 0.03 and abs(z.std() - 1) < 0.03


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(st.sampled_from([np.float32, np.float64]),
                  hnp.array_shapes(min_dims=1, max_dims=4, min_side=1, max_side=4),
                  elements=st.floats(-1e6, 1e6, width=32)))
def test_tnsr_round_trip(array):
    out = tnsr.decode(tnsr.encode(array))
    assert out.dtype == array.dtype and out.shape == array.shape
    np.testing.assert_array_equal(out, array)


def test_tnsr_layout_is_little_endian():
    blob = tnsr.encode(np.arange(6, dtype=np.float32).reshape(2, 3))
    assert blob[:4] == b"TNSR"
    assert struct.unpack_from("<BBBB", blob, 4) == (1, 0, 2, 0)
    assert struct.unpack_from("<2Q", blob, 8) == (2, 3)
    assert np.frombuffer(blob[24:], "<f4").tolist() == [0, 1, 2, 3, 4, 5]


def test_tnsr_accepts_tensors(tmp_path):
    t = Tensor(np.ones((2, 2)))
    tnsr.save(tmp_path / "t.tnsr", t)
    np.testing.assert_array_equal(tnsr.load(tmp_path / "t.tnsr"), t.data)


@pytest.mark.parametrize("mutate,match", [
    (lambda b: b"XXXX" + b[4:], "magic"),
    (lambda b: b[:4] + b"\x02" + b[5:], "version"),
    (lambda b: b[:5] + b"\x07" + b[6:], "dtype"),
    (lambda b: b[:-1], "size"),
])
def test_tnsr_rejects_corrupt(mutate, match):
    blob = tnsr.encode(np.zeros((2, 2)))
    with pytest.raises(tnsr.TnsrFormatError, match=match):
        tnsr.decode(mutate(blob))


def test_ppm_round_trip_on_8bit_grid(tmp_path):
    img = SeededRng(1).next_u32(3 * 5 * 4).reshape(3, 5, 4) % 256 / 255.0
    write_ppm(tmp_path / "a.ppm", img)
    np.testing.assert_allclose(read_ppm(tmp_path / "a.ppm"), img, atol=1e-12)


def test_ppm_header_and_errors():
    blob = encode_ppm(np.zeros((3, 2, 5)))
    assert blob.startswith(b"P6\n5 2\n255\n") and len(blob) == 11 + 30
    with pytest.raises(PpmFormatError):
        decode_ppm(b"P3\n1 1\n255\n000")
    with pytest.raises(PpmFormatError):
        decode_ppm(blob[:-1])
    with pytest.raises(PpmFormatError):
        encode_ppm(np.zeros((1, 2, 2)))
