"""Lesion segmentation metrics: Dice, false-positive and false-negative volume.

Aggregation reports per-tracer means and a balanced Dice that weights FDG and
PSMA equally regardless of how many exams each contributes.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, List, Optional

import numpy as np

from .case import Tracer
from .volume import Kind, Volume3, connected_components, volume_ml

__all__ = [
    "CaseMetrics",
    "MetricsReport",
    "dice",
    "false_positive_volume_ml",
    "false_negative_volume_ml",
    "evaluate_case",
    "aggregate",
]

SUMMARY_KEYS = ("dice_fdg", "dice_psma", "dice_mean", "dice_balanced", "fp_vol_mean_ml", "fn_vol_mean_ml")


def _check_pair(pred: Volume3, gt: Volume3) -> None:
    if pred.kind is not Kind.BINARY or gt.kind is not Kind.BINARY:
        raise TypeError("pred and gt must be BINARY volumes")
    if not pred.same_grid(gt):
        raise ValueError(f"grid mismatch: pred {pred.dims}/{pred.spacing} vs gt {gt.dims}/{gt.spacing}")


def dice(pred: Volume3, gt: Volume3) -> float:
    """2|P∩G| / (|P|+|G|), defined as 1.0 when both masks are empty."""
    _check_pair(pred, gt)
    p = pred.data.astype(bool)
    g = gt.data.astype(bool)
    denom = int(p.sum()) + int(g.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int(np.logical_and(p, g).sum()) / denom


def _unmatched_volume(source: Volume3, other: Volume3, connectivity: int) -> float:
    """Total mL of components of ``source`` sharing no voxel with ``other``."""
    cc = connected_components(source, connectivity)
    if cc.component_count == 0:
        return 0.0
    hit = np.zeros(cc.component_count + 1, dtype=bool)
    hit[np.unique(cc.labels[other.data.astype(bool)])] = True
    sizes = np.asarray(cc.component_voxel_counts)
    missed = int(sizes[~hit[1:]].sum())
    return volume_ml(missed, source.spacing)


def false_positive_volume_ml(pred: Volume3, gt: Volume3, connectivity: int = 26) -> float:
    _check_pair(pred, gt)
    return _unmatched_volume(pred, gt, connectivity)


def false_negative_volume_ml(pred: Volume3, gt: Volume3, connectivity: int = 26) -> float:
    _check_pair(pred, gt)
    return _unmatched_volume(gt, pred, connectivity)


@dataclass(frozen=True)
class CaseMetrics:
    case_id: str
    tracer: Tracer
    dice: float
    fp_vol_ml: float
    fn_vol_ml: float

    def __post_init__(self):
        object.__setattr__(self, "tracer", Tracer(self.tracer))
        values = (self.dice, self.fp_vol_ml, self.fn_vol_ml)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"{self.case_id}: non-finite metric")
        if not 0.0 <= self.dice <= 1.0 or self.fp_vol_ml < 0 or self.fn_vol_ml < 0:
            raise ValueError(f"{self.case_id}: metric out of range")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tracer"] = self.tracer.value
        return d


def evaluate_case(case_id: str, tracer, pred: Volume3, gt: Volume3, connectivity: int = 26) -> CaseMetrics:
    return CaseMetrics(
        case_id,
        Tracer(tracer),
        dice(pred, gt),
        false_positive_volume_ml(pred, gt, connectivity),
        false_negative_volume_ml(pred, gt, connectivity),
    )


@dataclass
class MetricsReport:
    """Per-case metrics plus summary.

    ``dice_fdg``/``dice_psma`` are ``None`` when that tracer is absent; in that
    case ``dice_balanced`` falls back to the present tracer's mean and a
    ``single_tracer`` flag is recorded.
    """

    per_case: List[CaseMetrics]
    dice_fdg: Optional[float]
    dice_psma: Optional[float]
    dice_mean: float
    dice_balanced: float
    fp_vol_mean_ml: float
    fn_vol_mean_ml: float
    flags: List[str] = field(default_factory=list)

    @property
    def summary(self) -> dict:
        return {k: getattr(self, k) for k in SUMMARY_KEYS}

    def to_dict(self) -> dict:
        return {
            "per_case": [m.to_dict() for m in self.per_case],
            "summary": self.summary,
            "flags": list(self.flags),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        per_case = [CaseMetrics(**m) for m in d.get("per_case", [])]
        summary = d["summary"]
        return cls(per_case, **{k: summary[k] for k in SUMMARY_KEYS}, flags=list(d.get("flags", [])))

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        return cls.from_dict(json.loads(text))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=["case_id", "tracer", "dice", "fp_vol_ml", "fn_vol_ml"])
            writer.writeheader()
            for m in self.per_case:
                writer.writerow(m.to_dict())


def aggregate(per_case: Iterable[CaseMetrics]) -> MetricsReport:
    per_case = list(per_case)
    if not per_case:
        raise ValueError("cannot aggregate an empty list of case metrics")

    def mean(values):
        return float(np.mean(values)) if values else None

    by_tracer = {t: [m.dice for m in per_case if m.tracer is t] for t in Tracer}
    fdg = mean(by_tracer[Tracer.FDG])
    psma = mean(by_tracer[Tracer.PSMA])
    flags = []
    if fdg is not None and psma is not None:
        balanced = 0.5 * fdg + 0.5 * psma
    else:
        present = Tracer.FDG if fdg is not None else Tracer.PSMA
        balanced = fdg if fdg is not None else psma
        flags.append(f"single_tracer:{present.value}")
    return MetricsReport(
        per_case=per_case,
        dice_fdg=fdg,
        dice_psma=psma,
        dice_mean=mean([m.dice for m in per_case]),
        dice_balanced=balanced,
        fp_vol_mean_ml=mean([m.fp_vol_ml for m in per_case]),
        fn_vol_mean_ml=mean([m.fn_vol_ml for m in per_case]),
        flags=flags,
    )
