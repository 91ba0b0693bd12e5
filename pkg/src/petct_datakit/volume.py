"""3D scalar volumes and the geometric primitives used throughout the toolkit.

Arrays are indexed ``data[x, y, z]``; the flat, x-fastest layout is available
through :attr:`Volume3.flat`.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Tuple

import numpy as np
from scipy import ndimage

__all__ = [
    "Kind",
    "Volume3",
    "RigidParams",
    "ComponentLabeling",
    "apply_rigid",
    "apply_affine",
    "mirror",
    "connected_components",
    "volume_ml",
    "default_pad",
    "AXES",
]

AXES = ("x", "y", "z")
NEAREST = "NEAREST"
TRILINEAR = "TRILINEAR"


class Kind(str, enum.Enum):
    HU = "HU"
    SUV = "SUV"
    BINARY = "BINARY"
    PROB = "PROB"


def default_pad(kind: Kind) -> float:
    """Out-of-field value: air for CT, zero for everything else."""
    return -1000.0 if Kind(kind) is Kind.HU else 0.0


@dataclass(frozen=True, eq=False)
class Volume3:
    """Immutable 3D grid with spacing/origin metadata.

    BINARY volumes are stored as ``uint8``; all other kinds as ``float64``.
    The array is made read-only on construction.
    """

    data: np.ndarray
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    kind: Kind = Kind.HU

    def __post_init__(self):
        kind = Kind(self.kind)
        arr = np.asarray(self.data)
        if arr.ndim != 3:
            raise ValueError(f"unsupported dimensionality: expected 3D data, got {arr.ndim}D")
        if 0 in arr.shape:
            raise ValueError("volume dims must be positive")
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if len(spacing) != 3 or len(origin) != 3:
            raise ValueError("spacing and origin must be 3-tuples")
        if not all(s > 0 for s in spacing):
            raise ValueError(f"spacing must be positive, got {spacing}")
        if kind is Kind.BINARY:
            if not np.isin(arr, (0, 1)).all():
                raise ValueError("BINARY volume contains values outside {0, 1}")
            arr = arr.astype(np.uint8, copy=True)
        else:
            arr = arr.astype(np.float64, copy=True)
            if kind is Kind.PROB and (arr.min() < 0 or arr.max() > 1):
                raise ValueError("PROB volume contains values outside [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "kind", kind)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(n) for n in self.data.shape)

    @property
    def flat(self) -> np.ndarray:
        """Data in x-fastest linear order."""
        return self.data.ravel(order="F")

    @classmethod
    def from_flat(cls, flat, dims, **kwargs) -> "Volume3":
        flat = np.asarray(flat)
        if flat.size != int(np.prod(dims)):
            raise ValueError(f"data length {flat.size} does not match dims {tuple(dims)}")
        return cls(flat.reshape(tuple(dims), order="F"), **kwargs)

    def with_data(self, data, kind: Kind | None = None) -> "Volume3":
        """Same grid, new values."""
        return Volume3(data, self.spacing, self.origin, self.kind if kind is None else kind)

    def same_grid(self, other: "Volume3") -> bool:
        return self.dims == other.dims and np.allclose(self.spacing, other.spacing, rtol=0, atol=1e-9)

    def equals(self, other: "Volume3") -> bool:
        """Bitwise equality of values plus identical metadata."""
        return (
            self.kind is other.kind
            and self.dims == other.dims
            and self.spacing == other.spacing
            and self.origin == other.origin
            and self.data.dtype == other.data.dtype
            and self.data.tobytes() == other.data.tobytes()
        )


@dataclass(frozen=True)
class RigidParams:
    """In-plane rotation (degrees) followed by a continuous voxel shift."""

    rotation_deg: float = 0.0
    shift_voxels: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "rotation_deg", float(self.rotation_deg))
        object.__setattr__(self, "shift_voxels", tuple(float(s) for s in self.shift_voxels))

    @property
    def is_identity(self) -> bool:
        return self.rotation_deg == 0.0 and self.shift_voxels == (0.0, 0.0, 0.0)

    def to_dict(self) -> dict:
        return {"rotation_deg": self.rotation_deg, "shift_voxels": list(self.shift_voxels)}


@dataclass(frozen=True)
class ComponentLabeling:
    labels: np.ndarray
    component_count: int
    component_voxel_counts: List[int] = field(default_factory=list)


def _rotation_matrix(angle_deg: float, axis: str = "z") -> np.ndarray:
    """Right-handed rotation about one grid axis."""
    theta = np.deg2rad(angle_deg)
    c, s = np.cos(theta), np.sin(theta)
    i, j = {"z": (0, 1), "x": (1, 2), "y": (2, 0)}[axis]
    rot = np.eye(3)
    rot[i, i], rot[i, j] = c, -s
    rot[j, i], rot[j, j] = s, c
    return rot


def _sample(data: np.ndarray, coords: np.ndarray, interp: str, pad_value: float) -> np.ndarray:
    """Sample ``data`` at continuous voxel coordinates ``coords`` (3, N)."""
    shape = np.asarray(data.shape)[:, None]
    eps = 1e-9
    inside = np.all((coords >= -eps) & (coords <= shape - 1 + eps), axis=0)
    out = np.full(coords.shape[1], pad_value, dtype=np.float64)
    c = np.clip(coords[:, inside], 0, shape - 1)
    if interp == NEAREST:
        idx = np.floor(c + 0.5).astype(np.intp)
        idx = np.minimum(idx, shape - 1)
        out[inside] = data[idx[0], idx[1], idx[2]]
        return out
    if interp != TRILINEAR:
        raise ValueError(f"unknown interpolation {interp!r}")
    lo = np.minimum(np.floor(c).astype(np.intp), shape - 1)
    hi = np.minimum(lo + 1, shape - 1)
    frac = c - lo
    acc = np.zeros(c.shape[1], dtype=np.float64)
    for corner in range(8):
        bits = [(corner >> a) & 1 for a in range(3)]
        ix = [hi[a] if bits[a] else lo[a] for a in range(3)]
        w = np.ones(c.shape[1])
        for a in range(3):
            w = w * (frac[a] if bits[a] else 1.0 - frac[a])
        acc += w * data[ix[0], ix[1], ix[2]]
    out[inside] = acc
    return out


def apply_affine(
    vol: Volume3,
    matrix: np.ndarray,
    shift_voxels: Sequence[float] = (0.0, 0.0, 0.0),
    interp: str = TRILINEAR,
    pad_value: float | None = None,
) -> Volume3:
    """Resample ``vol`` under ``p -> matrix @ (p - center) + center + shift``.

    Each output voxel reads the input at the inverse-mapped coordinate.
    The center is the continuous voxel-space center of the grid.
    """
    if pad_value is None:
        pad_value = default_pad(vol.kind)
    matrix = np.asarray(matrix, dtype=np.float64)
    shift = np.asarray(shift_voxels, dtype=np.float64)
    center = (np.asarray(vol.dims, dtype=np.float64) - 1.0) / 2.0
    grid = np.indices(vol.dims, dtype=np.float64).reshape(3, -1)
    inv = np.linalg.inv(matrix)
    src = inv @ (grid - (center + shift)[:, None]) + center[:, None]
    values = _sample(vol.data, src, interp, pad_value).reshape(vol.dims)
    if vol.kind is Kind.PROB:
        values = np.clip(values, 0.0, 1.0)
    return vol.with_data(values)


def apply_rigid(
    vol: Volume3,
    params: RigidParams,
    interp: str = TRILINEAR,
    pad_value: float | None = None,
    axis: str = "z",
) -> Volume3:
    """Rotate about the grid center, then translate.

    BINARY volumes should be resampled with NEAREST so they stay binary.
    """
    if params.is_identity:
        return vol
    if vol.kind is Kind.BINARY and interp != NEAREST:
        raise ValueError("BINARY volumes require NEAREST interpolation")
    return apply_affine(
        vol, _rotation_matrix(params.rotation_deg, axis), params.shift_voxels, interp, pad_value
    )


def _axis_indices(axes: Iterable) -> Tuple[int, ...]:
    out = []
    for a in axes:
        i = AXES.index(a) if isinstance(a, str) else int(a)
        if i not in (0, 1, 2):
            raise ValueError(f"invalid axis {a!r}")
        out.append(i)
    return tuple(sorted(set(out)))


def mirror(vol: Volume3, axes: Iterable = ()) -> Volume3:
    idx = _axis_indices(axes)
    if not idx:
        return vol
    return vol.with_data(np.flip(vol.data, axis=idx))


def _structure(connectivity: int) -> np.ndarray:
    rank = {6: 1, 18: 2, 26: 3}.get(connectivity)
    if rank is None:
        raise ValueError(f"connectivity must be 6, 18 or 26, got {connectivity}")
    return ndimage.generate_binary_structure(3, rank)


def connected_components(vol: Volume3, connectivity: int = 26) -> ComponentLabeling:
    """Label connected foreground components.

    Labels are ordered by the x-fastest linear index of each component's
    first voxel.
    """
    if vol.kind is not Kind.BINARY:
        raise TypeError(f"connected_components requires a BINARY volume, got {vol.kind.value}")
    raw, count = ndimage.label(vol.data, structure=_structure(connectivity))
    if count == 0:
        return ComponentLabeling(np.zeros(vol.dims, dtype=np.int32), 0, [])
    flat = raw.ravel(order="F")
    nz = np.flatnonzero(flat)
    first = np.full(count + 1, np.iinfo(np.int64).max, dtype=np.int64)
    np.minimum.at(first, flat[nz], nz)
    order = np.argsort(first[1:], kind="stable") + 1
    remap = np.zeros(count + 1, dtype=np.int32)
    remap[order] = np.arange(1, count + 1, dtype=np.int32)
    labels = remap[raw]
    sizes = np.bincount(labels.ravel(), minlength=count + 1)[1:]
    return ComponentLabeling(labels, int(count), [int(s) for s in sizes])


def volume_ml(voxel_count: int, spacing: Sequence[float]) -> float:
    sx, sy, sz = spacing
    return voxel_count * sx * sy * sz / 1000.0
