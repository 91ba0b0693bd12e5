"""Declarative augmentation schemes applied online with seeded randomness.

A scheme is an ordered list of :class:`TransformSpec`. Each spec fires
independently with its probability; the random stream for spec ``i`` is keyed
by ``(seed, case_id, i, modality)`` so a case augments identically no matter
which worker processes it or in what order.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy import ndimage

from .case import PetCtCase, Tracer
from .misalign import MisalignConfig, apply_misalignment, sample_misalignment
from .rng import substream
from .volume import AXES, NEAREST, TRILINEAR, Volume3, _rotation_matrix, apply_affine, mirror

__all__ = [
    "TransformKind",
    "TransformSpec",
    "AugmentScheme",
    "PetCtCase",
    "Tracer",
    "baseline_scheme",
    "subtle_scheme",
    "with_misalignment",
    "apply_scheme",
    "apply_scheme_with_provenance",
    "gamma_transform",
    "gaussian_noise",
    "load_scheme",
    "save_scheme",
    "SUBTLE_FACTOR",
]

SUBTLE_FACTOR = 0.5

# amplitude keys holding uniform [lo, hi] bounds
RANGE_KEYS = ("rotation_deg", "scale", "sigma_rel_sd", "sigma_voxels", "multiplier", "gamma")

_DECISION, _CT, _PET = 0, 1, 2


class TransformKind(str, enum.Enum):
    AFFINE = "AFFINE"
    GAUSSIAN_NOISE = "GAUSSIAN_NOISE"
    GAUSSIAN_BLUR = "GAUSSIAN_BLUR"
    BRIGHTNESS = "BRIGHTNESS"
    GAMMA = "GAMMA"
    GAMMA_INVERTED = "GAMMA_INVERTED"
    MIRROR = "MIRROR"
    MISALIGN = "MISALIGN"


SPATIAL = {TransformKind.AFFINE, TransformKind.MIRROR, TransformKind.MISALIGN}


@dataclass(frozen=True)
class TransformSpec:
    kind: TransformKind
    probability: float
    amplitude: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", TransformKind(self.kind))
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError(f"{self.kind.value}: probability {self.probability} outside [0, 1]")
        for key in RANGE_KEYS:
            if key in self.amplitude:
                lo, hi = self.amplitude[key]
                if lo > hi:
                    raise ValueError(f"{self.kind.value}: range {key}=[{lo}, {hi}] has lo > hi")
        if self.kind is TransformKind.MISALIGN:
            MisalignConfig.from_dict(self.amplitude)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "p": self.probability, "amplitude": self.amplitude}

    @classmethod
    def from_dict(cls, d: dict) -> "TransformSpec":
        return cls(d["kind"], float(d["p"]), dict(d.get("amplitude", {})))


@dataclass(frozen=True)
class AugmentScheme:
    name: str
    transforms: Tuple[TransformSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "transforms", tuple(self.transforms))

    @property
    def kinds(self) -> List[TransformKind]:
        return [t.kind for t in self.transforms]

    def to_dict(self) -> dict:
        return {"name": self.name, "transforms": [t.to_dict() for t in self.transforms]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentScheme":
        return cls(d["name"], tuple(TransformSpec.from_dict(t) for t in d["transforms"]))

    @classmethod
    def from_json(cls, text: str) -> "AugmentScheme":
        return cls.from_dict(json.loads(text))


def load_scheme(path) -> AugmentScheme:
    with open(path, encoding="utf-8") as fh:
        return AugmentScheme.from_json(fh.read())


def save_scheme(scheme: AugmentScheme, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(scheme.to_json())


def _preset(name: str) -> AugmentScheme:
    text = resources.files(__package__).joinpath("presets", f"{name}.json").read_text("utf-8")
    return AugmentScheme.from_json(text)


def baseline_scheme() -> AugmentScheme:
    """Framework-convention default scheme (values live in ``presets/baseline.json``)."""
    return _preset("baseline")


def subtle_scheme(factor: float = SUBTLE_FACTOR) -> AugmentScheme:
    """Baseline without Gaussian blur and inverted gamma, with damped affine amplitudes.

    Rotation bounds are multiplied by ``factor``; scale bounds move toward 1 by
    the same factor.
    """
    out = []
    for t in baseline_scheme().transforms:
        if t.kind in (TransformKind.GAUSSIAN_BLUR, TransformKind.GAMMA_INVERTED):
            continue
        if t.kind is TransformKind.AFFINE:
            amp = dict(t.amplitude)
            lo, hi = amp["rotation_deg"]
            amp["rotation_deg"] = [round(lo * factor, 12), round(hi * factor, 12)]
            lo, hi = amp["scale"]
            amp["scale"] = [round(1 - (1 - lo) * factor, 12), round(1 + (hi - 1) * factor, 12)]
            t = TransformSpec(t.kind, t.probability, amp)
        out.append(t)
    return AugmentScheme("subtle", tuple(out))


def with_misalignment(scheme: AugmentScheme, cfg: Optional[MisalignConfig] = None) -> AugmentScheme:
    """Prepend a MISALIGN step so it runs before every other transform."""
    if TransformKind.MISALIGN in scheme.kinds:
        raise ValueError(f"scheme {scheme.name!r} already contains MISALIGN")
    cfg = cfg or MisalignConfig()
    spec = TransformSpec(TransformKind.MISALIGN, 1.0, cfg.to_dict())
    return AugmentScheme(scheme.name + "+misal", (spec,) + scheme.transforms)


# -- intensity primitives ---------------------------------------------------

def gamma_transform(vol: Volume3, gamma: float) -> Volume3:
    """Min-max normalize, raise to ``gamma``, map back to the original range."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    lo, hi = float(vol.data.min()), float(vol.data.max())
    if hi <= lo:
        return vol
    norm = (vol.data - lo) / (hi - lo)
    return vol.with_data(np.power(norm, gamma) * (hi - lo) + lo)


def gaussian_noise(vol: Volume3, sigma: float, rng: np.random.Generator) -> Volume3:
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return vol
    return vol.with_data(vol.data + rng.normal(0.0, sigma, size=vol.dims))


def _uniform(rng, bounds) -> float:
    lo, hi = bounds
    return float(rng.uniform(lo, hi))


def _intensity(vol: Volume3, spec: TransformSpec, rng) -> Tuple[Volume3, dict]:
    amp = spec.amplitude
    kind = spec.kind
    if kind is TransformKind.GAUSSIAN_NOISE:
        sigma = _uniform(rng, amp["sigma_rel_sd"]) * float(vol.data.std())
        return gaussian_noise(vol, sigma, rng), {"sigma": sigma}
    if kind is TransformKind.GAUSSIAN_BLUR:
        sigma = _uniform(rng, amp["sigma_voxels"])
        return vol.with_data(ndimage.gaussian_filter(vol.data, sigma, mode="nearest")), {"sigma": sigma}
    if kind is TransformKind.BRIGHTNESS:
        m = _uniform(rng, amp["multiplier"])
        return vol.with_data(vol.data * m), {"multiplier": m}
    if kind is TransformKind.GAMMA:
        g = _uniform(rng, amp["gamma"])
        return gamma_transform(vol, g), {"gamma": g}
    if kind is TransformKind.GAMMA_INVERTED:
        g = _uniform(rng, amp["gamma"])
        inverted = gamma_transform(vol.with_data(-vol.data), g)
        return vol.with_data(-inverted.data), {"gamma": g}
    raise ValueError(f"{kind.value} is not an intensity transform")


def _spatial_all(case: PetCtCase, fn) -> PetCtCase:
    """Apply one geometry to ct, pet and label alike."""
    label = None if case.label is None else fn(case.label, NEAREST)
    return case.replace(ct=fn(case.ct, TRILINEAR), pet=fn(case.pet, TRILINEAR), label=label)


def _apply_one(case: PetCtCase, spec: TransformSpec, index: int, seed: int) -> Tuple[PetCtCase, dict]:
    dec = substream(seed, case.case_id, index, _DECISION)
    if not dec.random() < spec.probability:
        return case, {}
    amp = spec.amplitude
    kind = spec.kind
    if kind is TransformKind.AFFINE:
        angle = _uniform(dec, amp["rotation_deg"])
        scale = _uniform(dec, amp["scale"])
        matrix = _rotation_matrix(angle, amp.get("axis", "z")) * scale
        case = _spatial_all(case, lambda v, interp: apply_affine(v, matrix, interp=interp))
        return case, {"rotation_deg": angle, "scale": scale}
    if kind is TransformKind.MIRROR:
        p_axis = float(amp.get("p_axis", 0.5))
        candidates = amp.get("axes", list(AXES))
        axes = [a for a in candidates if dec.random() < p_axis]
        case = _spatial_all(case, lambda v, interp: mirror(v, axes))
        return case, {"axes": axes}
    if kind is TransformKind.MISALIGN:
        cfg = MisalignConfig.from_dict(amp)
        params = sample_misalignment(cfg, dec)
        return apply_misalignment(case, params, cfg), params.to_dict()
    ct, ct_params = _intensity(case.ct, spec, substream(seed, case.case_id, index, _CT))
    pet, pet_params = _intensity(case.pet, spec, substream(seed, case.case_id, index, _PET))
    return case.replace(ct=ct, pet=pet), {"ct": ct_params, "pet": pet_params}


def apply_scheme_with_provenance(
    case: PetCtCase, scheme: AugmentScheme, seed: int
) -> Tuple[PetCtCase, List[dict]]:
    """Like :func:`apply_scheme`, also returning one record per transform.

    Each record has ``index``, ``kind``, ``fired`` and, if fired, the sampled
    ``params``.
    """
    events = []
    for i, spec in enumerate(scheme.transforms):
        new_case, params = _apply_one(case, spec, i, seed)
        fired = bool(params)
        event = {"index": i, "kind": spec.kind.value, "fired": fired}
        if fired:
            event["params"] = params
        events.append(event)
        case = new_case
    return case, events


def apply_scheme(case: PetCtCase, scheme: AugmentScheme, seed: int) -> PetCtCase:
    """Augment one case; deterministic in ``(case, scheme, seed)``."""
    return apply_scheme_with_provenance(case, scheme, seed)[0]
