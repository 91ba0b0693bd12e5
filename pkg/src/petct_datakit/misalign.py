"""Misalignment augmentation.

A small random rigid perturbation is applied to the CT only. PET and the
ground-truth label are returned untouched, so the label stays coupled to PET.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Tuple

import numpy as np

from .case import PetCtCase
from .volume import NEAREST, TRILINEAR, RigidParams, apply_rigid

__all__ = ["MisalignConfig", "sample_misalignment", "apply_misalignment"]


@dataclass(frozen=True)
class MisalignConfig:
    max_rotation_deg: float = 5.0
    max_shift_voxels: Tuple[float, float, float] = (2.0, 2.0, 0.0)
    p_rotation: float = 0.1
    p_translation: float = 0.1
    interp: str = TRILINEAR
    ct_pad_hu: float = -1000.0
    rotation_axis: str = "z"

    def __post_init__(self):
        object.__setattr__(self, "max_shift_voxels", tuple(float(s) for s in self.max_shift_voxels))
        if self.max_rotation_deg < 0 or any(s < 0 for s in self.max_shift_voxels):
            raise ValueError("misalignment amplitudes must be non-negative")
        if len(self.max_shift_voxels) != 3:
            raise ValueError("max_shift_voxels must have three components")
        for p in (self.p_rotation, self.p_translation):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability {p} outside [0, 1]")
        if self.interp not in (NEAREST, TRILINEAR):
            raise ValueError(f"unknown interpolation {self.interp!r}")
        if self.rotation_axis not in ("x", "y", "z"):
            raise ValueError(f"unknown rotation axis {self.rotation_axis!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["max_shift_voxels"] = list(self.max_shift_voxels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MisalignConfig":
        return cls(**d)


def sample_misalignment(cfg: MisalignConfig, rng: np.random.Generator) -> RigidParams:
    """Draw rotation and translation independently, each with its own probability.

    Amplitudes are uniform in ``[-max, +max]``. A fixed number of variates is
    consumed regardless of which parts fire.
    """
    fire_rot, fire_shift = rng.random(2)
    angle = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg)
    bounds = np.asarray(cfg.max_shift_voxels)
    shift = rng.uniform(-bounds, bounds)
    rotation = float(angle) if fire_rot < cfg.p_rotation else 0.0
    shift = tuple(float(s) + 0.0 for s in shift) if fire_shift < cfg.p_translation else (0.0, 0.0, 0.0)
    return RigidParams(rotation, shift)


def apply_misalignment(case: PetCtCase, params: RigidParams, cfg: MisalignConfig) -> PetCtCase:
    """Displace the CT by ``params`` (rotation first, then translation)."""
    if params.is_identity:
        return case
    ct = apply_rigid(case.ct, params, cfg.interp, cfg.ct_pad_hu, axis=cfg.rotation_axis)
    return case.replace(ct=ct)
