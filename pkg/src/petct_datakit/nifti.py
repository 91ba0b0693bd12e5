"""NIfTI-1 reading and writing on top of nibabel."""
from __future__ import annotations

import os
from typing import Union

import nibabel as nib
import numpy as np

from .volume import Kind, Volume3

__all__ = ["NiftiError", "load_nifti", "save_nifti"]

PathLike = Union[str, os.PathLike]


class NiftiError(ValueError):
    """Raised for unreadable, unsupported or non-axis-aligned NIfTI files."""


def _check_axis_aligned(affine: np.ndarray, which: str) -> None:
    lin = np.asarray(affine, dtype=np.float64)[:3, :3]
    off_diag = lin - np.diag(np.diag(lin))
    scale = max(np.abs(lin).max(), 1.0)
    if np.abs(off_diag).max() > 1e-6 * scale or np.any(np.abs(np.diag(lin)) <= 0):
        raise NiftiError(
            f"{which} affine is not axis-aligned; reorient the image externally before loading"
        )


def load_nifti(path: PathLike, kind: Kind = Kind.HU) -> Volume3:
    """Read a 3D NIfTI-1 file into a :class:`Volume3`.

    ``scl_slope``/``scl_inter`` are applied. Spacing and origin come from the
    header affine, which must be diagonal up to sign; flipped axes are kept as
    stored (no resampling).
    """
    try:
        img = nib.load(os.fspath(path))
    except FileNotFoundError:
        raise
    except Exception as exc:  # nibabel raises a zoo of types for bad headers
        raise NiftiError(f"malformed NIfTI file {path}: {exc}") from exc
    if not isinstance(img, nib.Nifti1Image):
        raise NiftiError(f"{path} is not a NIfTI-1 image")
    hdr = img.header
    dtype = hdr.get_data_dtype()
    if dtype.fields is not None or not np.issubdtype(dtype, np.number) or np.issubdtype(
        dtype, np.complexfloating
    ):
        raise NiftiError(f"unsupported datatype {dtype} in {path}")
    if len(img.shape) != 3:
        raise NiftiError(f"unsupported dimensionality: {len(img.shape)}D image in {path}")

    for which, (aff, code) in (("sform", hdr.get_sform(coded=True)), ("qform", hdr.get_qform(coded=True))):
        if aff is not None and code:
            _check_axis_aligned(aff, which)
    affine = img.affine
    _check_axis_aligned(affine, "header")

    data = np.asarray(img.dataobj, dtype=np.float64)
    spacing = tuple(float(z) for z in hdr.get_zooms()[:3])
    origin = tuple(float(o) for o in affine[:3, 3])
    try:
        return Volume3(data, spacing, origin, kind)
    except ValueError as exc:
        raise NiftiError(f"{path}: {exc}") from exc


def _storage_dtype(vol: Volume3) -> type:
    if vol.kind is Kind.BINARY:
        return np.uint8
    # float32 when it is lossless, otherwise keep full precision
    if np.array_equal(vol.data.astype(np.float32), vol.data):
        return np.float32
    return np.float64


def save_nifti(vol: Volume3, path: PathLike) -> None:
    """Write ``vol`` with an identity-orientation affine scaled by spacing.

    Gzip compression follows the ``.nii.gz`` extension.
    """
    affine = np.diag([*vol.spacing, 1.0])
    affine[:3, 3] = vol.origin
    dtype = _storage_dtype(vol)
    img = nib.Nifti1Image(vol.data.astype(dtype), affine)
    img.header.set_data_dtype(dtype)
    img.header.set_zooms(vol.spacing)
    img.header.set_xyzt_units("mm")
    img.set_qform(affine, code=1)
    img.set_sform(affine, code=1)
    nib.save(img, os.fspath(path))
