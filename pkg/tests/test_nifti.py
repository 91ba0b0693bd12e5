import gzip
import struct

import numpy as np
import pytest

from petct_datakit import Kind, NiftiError, Volume3, load_nifti, save_nifti


def raw_nifti(data, spacing, datatype, bitpix, srow=None, path=None, slope=0.0, inter=0.0):
    """Hand-assembled single-file NIfTI-1 (348-byte header + 4-byte extension flag)."""
    hdr = bytearray(348)
    struct.pack_into("<i", hdr, 0, 348)
    dim = [data.ndim] + list(data.shape) + [1] * (7 - data.ndim)
    struct.pack_into("<8h", hdr, 40, *dim)
    struct.pack_into("<h", hdr, 70, datatype)
    struct.pack_into("<h", hdr, 72, bitpix)
    pixdim = [1.0] + list(spacing) + [1.0] * (7 - len(spacing))
    struct.pack_into("<8f", hdr, 76, *pixdim)
    struct.pack_into("<f", hdr, 108, 352.0)  # vox_offset
    struct.pack_into("<ff", hdr, 112, slope, inter)
    struct.pack_into("<b", hdr, 123, 2)  # xyzt_units: mm
    sp3 = (list(spacing) + [1.0, 1.0, 1.0])[:3]
    srow = srow if srow is not None else np.diag([*sp3, 1.0])[:3]
    struct.pack_into("<h", hdr, 254, 1)  # sform_code
    struct.pack_into("<4f", hdr, 280, *srow[0])
    struct.pack_into("<4f", hdr, 296, *srow[1])
    struct.pack_into("<4f", hdr, 312, *srow[2])
    hdr[344:348] = b"n+1\x00"
    payload = bytes(hdr) + b"\x00" * 4 + data.tobytes(order="F")
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wb") as fh:
        fh.write(payload)


def read_header(path):
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rb") as fh:
        raw = fh.read(348)
    dim = struct.unpack_from("<8h", raw, 40)
    return {
        "dim": dim[1 : 1 + dim[0]],
        "datatype": struct.unpack_from("<h", raw, 70)[0],
        "pixdim": struct.unpack_from("<8f", raw, 76)[1:4],
    }


def test_load_reference_file(tmp_path):
    data = np.arange(64, dtype=np.float32).reshape(4, 4, 4)
    p = tmp_path / "ref.nii.gz"
    raw_nifti(data, (2.0, 2.0, 3.0), 16, 32, path=p)
    v = load_nifti(p, Kind.SUV)
    assert v.dims == (4, 4, 4)
    assert v.spacing == (2.0, 2.0, 3.0)
    np.testing.assert_array_equal(v.data, data)


def test_scaling_applied_on_load(tmp_path):
    data = np.arange(8, dtype=np.int16).reshape(2, 2, 2)
    p = tmp_path / "scaled.nii"
    raw_nifti(data, (1.0, 1.0, 1.0), 4, 16, path=p, slope=2.0, inter=-1000.0)
    v = load_nifti(p)
    np.testing.assert_array_equal(v.data, data * 2.0 - 1000.0)


def test_two_dimensional_rejected(tmp_path):
    p = tmp_path / "flat.nii"
    raw_nifti(np.zeros((4, 4), dtype=np.float32), (1.0, 1.0), 16, 32, path=p)
    with pytest.raises(NiftiError, match="unsupported dimensionality"):
        load_nifti(p)


def test_oblique_affine_rejected(tmp_path):
    th = np.deg2rad(10)
    srow = np.array([[np.cos(th), -np.sin(th), 0, 0], [np.sin(th), np.cos(th), 0, 0], [0, 0, 1, 0]])
    p = tmp_path / "oblique.nii.gz"
    raw_nifti(np.zeros((3, 3, 3), dtype=np.float32), (1.0, 1.0, 1.0), 16, 32, srow=srow, path=p)
    with pytest.raises(NiftiError, match="axis-aligned"):
        load_nifti(p)


def test_flipped_axis_is_accepted(tmp_path):
    srow = np.array([[-2.0, 0, 0, 10], [0, 2.0, 0, 0], [0, 0, 3.0, 0]])
    p = tmp_path / "flipped.nii"
    raw_nifti(np.zeros((3, 3, 3), dtype=np.float32), (2.0, 2.0, 3.0), 16, 32, srow=srow, path=p)
    v = load_nifti(p)
    assert v.spacing == (2.0, 2.0, 3.0)
    assert v.origin == (10.0, 0.0, 0.0)


def test_unsupported_datatype(tmp_path):
    p = tmp_path / "complex.nii"
    raw_nifti(np.zeros((2, 2, 2), dtype=np.complex64), (1.0, 1.0, 1.0), 32, 64, path=p)
    with pytest.raises(NiftiError, match="unsupported datatype"):
        load_nifti(p)


def test_malformed_header(tmp_path):
    p = tmp_path / "junk.nii"
    p.write_bytes(b"not a nifti file at all" * 20)
    with pytest.raises(NiftiError):
        load_nifti(p)


@pytest.mark.parametrize("suffix", [".nii", ".nii.gz"])
@pytest.mark.parametrize(
    "kind,values",
    [
        (Kind.HU, lambda g: g.normal(0, 300, (5, 4, 3)).astype(np.float32)),
        (Kind.HU, lambda g: g.normal(0, 300, (5, 4, 3))),  # needs float64 storage
        (Kind.SUV, lambda g: g.gamma(2.0, 1.0, (5, 4, 3))),
        (Kind.PROB, lambda g: g.random((5, 4, 3))),
        (Kind.BINARY, lambda g: (g.random((5, 4, 3)) < 0.3).astype(np.uint8)),
    ],
)
def test_round_trip_is_exact(tmp_path, suffix, kind, values):
    g = np.random.default_rng(3)
    v = Volume3(values(g), spacing=(1.5, 1.5, 2.0), origin=(-10.0, 4.0, 0.5), kind=kind)
    p = tmp_path / f"vol{suffix}"
    save_nifti(v, p)
    w = load_nifti(p, kind)
    assert w.dims == v.dims
    assert w.spacing == (1.5, 1.5, 2.0)
    assert w.origin == v.origin
    assert w.data.tobytes() == v.data.tobytes()


def test_binary_saved_as_uint8(tmp_path):
    v = Volume3(np.ones((2, 2, 2)), kind=Kind.BINARY)
    p = tmp_path / "mask.nii.gz"
    save_nifti(v, p)
    hdr = read_header(p)
    assert hdr["datatype"] == 2  # DT_UNSIGNED_CHAR
    assert hdr["dim"] == (2, 2, 2)


def test_gzip_follows_extension(tmp_path):
    v = Volume3(np.zeros((2, 2, 2)))
    save_nifti(v, tmp_path / "a.nii.gz")
    save_nifti(v, tmp_path / "b.nii")
    assert (tmp_path / "a.nii.gz").read_bytes()[:2] == b"\x1f\x8b"
    assert (tmp_path / "b.nii").read_bytes()[:4] == struct.pack("<i", 348)
    assert read_header(tmp_path / "b.nii")["pixdim"] == (1.0, 1.0, 1.0)
