"""SUV-threshold masking of predicted lesion masks."""
from __future__ import annotations

import numpy as np

from .volume import Kind, Volume3

__all__ = ["suv_mask", "DEFAULT_SUV_THRESHOLD"]

DEFAULT_SUV_THRESHOLD = 1.0


def suv_mask(pred: Volume3, pet: Volume3, threshold: float = DEFAULT_SUV_THRESHOLD) -> Volume3:
    """Zero out predicted voxels whose SUV is strictly below ``threshold``.

    Voxels exactly at the threshold are kept. The result is always a subset of
    ``pred``.
    """
    if pred.kind is not Kind.BINARY:
        raise TypeError("pred must be a BINARY volume")
    if not pred.same_grid(pet):
        raise ValueError(f"grid mismatch: pred {pred.dims}/{pred.spacing} vs pet {pet.dims}/{pet.spacing}")
    keep = pet.data >= threshold
    return pred.with_data(np.where(keep, pred.data, 0).astype(np.uint8))
