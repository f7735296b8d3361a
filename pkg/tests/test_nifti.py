import gzip
import struct

import numpy as np
import pytest

from tumorlab import LabelVolume, ScalarVolume, SoftMask, load_label, load_nifti, save_nifti
from tumorlab.errors import NiftiFormatError, UnsupportedDatatypeError
from tumorlab.nifti import HEADER_SIZE, MAGIC, VOX_OFFSET


def test_round_trip_int16(tmp_path):
    rng = np.random.default_rng(0)
    data = rng.integers(-1000, 1000, size=(4, 4, 4)).astype(np.int16)
    vol = ScalarVolume(data, spacing=(1.0, 1.0, 1.0), origin=(10.0, -4.0, 2.5))
    path = tmp_path / "vol.nii"
    save_nifti(vol, path)
    back = load_nifti(path)
    assert back.data.dtype == np.int16
    assert np.array_equal(back.data, data)
    assert back.spacing == (1.0, 1.0, 1.0)
    assert back.origin == (10.0, -4.0, 2.5)
    assert back.data.size == 64


def test_round_trip_float32_gzip(tmp_path):
    rng = np.random.default_rng(1)
    data = rng.normal(0, 100, size=(5, 7, 3)).astype(np.float32)
    vol = ScalarVolume(data, spacing=(0.5, 1.0, 2.5))
    path = tmp_path / "vol.nii.gz"
    save_nifti(vol, path)
    back = load_nifti(path)
    assert np.array_equal(back.data, data)
    assert back.spacing == (0.5, 1.0, 2.5)


def test_gzip_output_is_deterministic(tmp_path):
    data = np.arange(60, dtype=np.float32).reshape(3, 4, 5)
    vol = ScalarVolume(data)
    p1, p2 = tmp_path / "a.nii.gz", tmp_path / "b.nii.gz"
    save_nifti(vol, p1)
    save_nifti(vol, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_labels_saved_as_uint8(tmp_path):
    labels = LabelVolume(np.random.default_rng(2).integers(0, 3, (4, 4, 4)).astype(np.uint8))
    path = tmp_path / "labels.nii"
    save_nifti(labels, path)
    blob = path.read_bytes()
    (datatype,) = struct.unpack_from("<h", blob, 70)
    assert datatype == 2  # uint8
    back = load_nifti(path)
    assert isinstance(back, LabelVolume)
    assert np.array_equal(back.data, labels.data)


def test_soft_mask_saved_as_float32(tmp_path):
    mask = SoftMask(np.random.default_rng(3).random((3, 3, 3)).astype(np.float32))
    path = tmp_path / "mask.nii"
    save_nifti(mask, path)
    back = load_nifti(path)
    assert back.data.dtype == np.float32
    assert np.array_equal(back.data, mask.data)


def test_scl_slope_and_inter_applied(tmp_path):
    # raw value 5 with slope 2 and intercept 10 must load as 20,
    # per the header scaling rule value = raw * slope + inter
    data = np.full((2, 2, 2), 5, dtype=np.int16)
    path = tmp_path / "scaled.nii"
    save_nifti(ScalarVolume(data), path)
    blob = bytearray(path.read_bytes())
    struct.pack_into("<2f", blob, 112, 2.0, 10.0)
    path.write_bytes(bytes(blob))
    back = load_nifti(path)
    assert back.data.dtype == np.float32
    assert np.all(back.data == 20.0)


def test_truncated_header_rejected(tmp_path):
    path = tmp_path / "short.nii"
    path.write_bytes(b"\x00" * 100)
    with pytest.raises(NiftiFormatError):
        load_nifti(path)


def test_bad_magic_rejected(tmp_path):
    data = np.zeros((2, 2, 2), dtype=np.int16)
    path = tmp_path / "bad.nii"
    save_nifti(ScalarVolume(data), path)
    blob = bytearray(path.read_bytes())
    blob[344:348] = b"XXXX"
    path.write_bytes(bytes(blob))
    with pytest.raises(NiftiFormatError):
        load_nifti(path)


def test_unsupported_datatype_rejected(tmp_path):
    data = np.zeros((2, 2, 2), dtype=np.int16)
    path = tmp_path / "odd.nii"
    save_nifti(ScalarVolume(data), path)
    blob = bytearray(path.read_bytes())
    struct.pack_into("<h", blob, 70, 8)  # int32: outside the supported set
    path.write_bytes(bytes(blob))
    with pytest.raises(UnsupportedDatatypeError):
        load_nifti(path)


def test_data_stored_x_fastest(tmp_path):
    # first stored voxel after the header must be data[0,0,0], second data[1,0,0]
    data = np.arange(8, dtype=np.int16).reshape(2, 2, 2)
    path = tmp_path / "order.nii"
    save_nifti(ScalarVolume(data), path)
    blob = path.read_bytes()
    raw = np.frombuffer(blob, dtype="<i2", count=8, offset=VOX_OFFSET)
    assert raw[0] == data[0, 0, 0]
    assert raw[1] == data[1, 0, 0]


def test_load_label_coerces_integral_scalars(tmp_path):
    data = np.zeros((3, 3, 3), dtype=np.int16)
    data[1, 1, 1] = 1
    path = tmp_path / "mask_int16.nii"
    save_nifti(ScalarVolume(data), path)
    lab = load_label(path)
    assert isinstance(lab, LabelVolume)
    assert lab.data[1, 1, 1] == 1


def test_save_rejects_nonfinite(tmp_path):
    vol = ScalarVolume(np.zeros((2, 2, 2), dtype=np.float32))
    vol.data[0, 0, 0] = np.inf  # sneak past construction-time validation
    with pytest.raises(ValueError):
        save_nifti(vol, tmp_path / "nan.nii")


def test_header_magic_and_size_constants(tmp_path):
    path = tmp_path / "hdr.nii"
    save_nifti(ScalarVolume(np.zeros((2, 2, 2), dtype=np.int16)), path)
    blob = path.read_bytes()
    assert struct.unpack_from("<i", blob, 0)[0] == HEADER_SIZE
    assert blob[344:348] == MAGIC
