import gzip

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from brainmim.nifti import NiftiError, decode_nifti, nifti_bytes, read_header, read_nifti, write_nifti
from brainmim.volume import Volume

DTYPES = {2: np.uint8, 4: np.int16, 8: np.int32, 16: np.float32, 64: np.float64}


def _affine():
    aff = np.diag([-1.5, 1.2, 2.0, 1.0])
    aff[:3, 3] = [10.0, -20.0, 5.0]
    return aff


def _sample_data(code, shape=(5, 4, 3), seed=0):
    r = np.random.default_rng(seed)
    if code == 2:
        return r.integers(0, 256, shape).astype(np.uint8)
    if code == 4:
        return r.integers(-32768, 32768, shape).astype(np.int16)
    if code == 8:
        return r.integers(-2**24, 2**24, shape).astype(np.int32)
    return r.normal(size=shape).astype(DTYPES[code])


@pytest.mark.parametrize("code", sorted(DTYPES))
@pytest.mark.parametrize("endian", ["<", ">"])
@pytest.mark.parametrize("gz", [False, True])
def test_reads_all_datatypes(tmp_path, code, endian, gz):
    data = _sample_data(code)
    path = tmp_path / ("x.nii.gz" if gz else "x.nii")
    path.write_bytes(oracles.raw_nifti(data, code, _affine(), endian=endian, gz=gz))
    vol = read_nifti(path)
    assert vol.id == "x"
    assert vol.shape == data.shape
    assert np.array_equal(vol.data, data.astype(np.float32))
    assert np.allclose(vol.affine, _affine())
    assert vol.spacing == pytest.approx((1.5, 1.2, 2.0), abs=1e-6)
    assert vol.orientation == "LAS"


def test_scaling_applied(tmp_path):
    data = np.arange(24, dtype=np.int16).reshape(2, 3, 4)
    path = tmp_path / "s.nii"
    path.write_bytes(oracles.raw_nifti(data, 4, np.eye(4), slope=0.5, inter=-1.0))
    assert np.allclose(read_nifti(path).data, data * 0.5 - 1.0)


def test_write_is_deterministic_and_gzip_inferred(tmp_path):
    vol = Volume(np.random.default_rng(0).normal(size=(4, 5, 6)), affine=_affine())
    a = write_nifti(vol, tmp_path / "a.nii.gz")
    b = write_nifti(vol, tmp_path / "b.nii.gz")
    assert a.read_bytes()[:2] == b"\x1f\x8b"
    assert a.read_bytes() == b.read_bytes()
    plain = write_nifti(vol, tmp_path / "c.nii")
    assert plain.read_bytes() == gzip.decompress(a.read_bytes())
    hdr = read_header(plain)
    assert hdr.datatype == 16 and hdr.sform_code == 2 and hdr.qform_code == 2


def test_qform_matches_sform(tmp_path):
    aff = np.eye(4)
    c, s = np.cos(0.3), np.sin(0.3)
    aff[:3, :3] = np.array([[c, -s, 0], [s, c, 0], [0, 0, -1]]) * [1.1, 0.9, 2.0]
    aff[:3, 3] = [1, 2, 3]
    raw = nifti_bytes(Volume(np.zeros((3, 3, 3)), affine=aff))
    from brainmim.nifti import NiftiHeader

    hdr = NiftiHeader.from_bytes(raw)
    assert np.allclose(hdr.qform_affine(), aff, atol=1e-5)


finite32 = st.floats(-1e6, 1e6, allow_nan=False, width=32)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float32, st.tuples(*[st.integers(1, 6)] * 3), elements=finite32))
def test_float32_roundtrip_property(data):
    raw = nifti_bytes(Volume(data, affine=_affine()))
    back = decode_nifti(raw)
    assert np.array_equal(back.data, data)
    assert np.allclose(back.affine, _affine(), atol=1e-5)


def _corrupt(raw, offset, fmt_bytes):
    out = bytearray(raw)
    out[offset:offset + len(fmt_bytes)] = fmt_bytes
    return bytes(out)


def test_error_cases():
    good = oracles.raw_nifti(np.zeros((2, 2, 2), np.float32), 16, np.eye(4))
    with pytest.raises(NiftiError, match="truncated header"):
        decode_nifti(good[:100])
    with pytest.raises(NiftiError, match="truncated data"):
        decode_nifti(good[:-4])
    with pytest.raises(NiftiError, match="magic"):
        decode_nifti(_corrupt(good, 344, b"abc\0"))
    with pytest.raises(NiftiError, match="two-file"):
        decode_nifti(_corrupt(good, 344, b"ni1\0"))
    with pytest.raises(NiftiError, match="datatype"):
        decode_nifti(_corrupt(good, 70, np.int16(256).tobytes()))
    with pytest.raises(NiftiError, match="NIfTI-2"):
        decode_nifti(_corrupt(good, 0, np.int32(540).tobytes()))
    nan = oracles.raw_nifti(np.array([np.nan, 1, 2, 3, 4, 5, 6, 7], np.float32).reshape(2, 2, 2), 16, np.eye(4))
    with pytest.raises(NiftiError, match="1 non-finite"):
        decode_nifti(nan)
    with pytest.raises(NiftiError, match="gzip"):
        decode_nifti(b"\x1f\x8b" + b"garbage" * 10)


def test_4d_singleton_squeezed():
    raw = bytearray(oracles.raw_nifti(np.ones((2, 3, 4), np.float32), 16, np.eye(4)))
    raw[40:42] = np.int16(4).tobytes()  # dim[0] = 4 with dim[4] = 1
    assert decode_nifti(bytes(raw)).shape == (2, 3, 4)


def test_true_4d_rejected():
    raw = bytearray(oracles.raw_nifti(np.ones((2, 3, 4), np.float32), 16, np.eye(4)))
    raw[40:42] = np.int16(4).tobytes()
    raw[48:50] = np.int16(2).tobytes()
    with pytest.raises(NiftiError, match="3D"):
        decode_nifti(bytes(raw))
