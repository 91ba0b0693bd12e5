from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Optional

from .volume import Kind, Volume3

__all__ = ["Tracer", "PetCtCase"]


class Tracer(str, enum.Enum):
    FDG = "FDG"
    PSMA = "PSMA"


@dataclass(frozen=True)
class PetCtCase:
    """Co-registered CT (HU), PET (SUV) and optional binary lesion label."""

    case_id: str
    tracer: Tracer
    ct: Volume3
    pet: Volume3
    label: Optional[Volume3] = None

    def __post_init__(self):
        object.__setattr__(self, "tracer", Tracer(self.tracer))
        if self.ct.kind is not Kind.HU or self.pet.kind is not Kind.SUV:
            raise ValueError("ct must be HU and pet must be SUV")
        if self.label is not None and self.label.kind is not Kind.BINARY:
            raise ValueError("label must be BINARY")
        for name in ("pet", "label"):
            other = getattr(self, name)
            if other is not None and not self.ct.same_grid(other):
                raise ValueError(
                    f"case {self.case_id}: {name} grid {other.dims}/{other.spacing} "
                    f"does not match ct {self.ct.dims}/{self.ct.spacing}"
                )

    @property
    def dims(self):
        return self.ct.dims

    @property
    def spacing(self):
        return self.ct.spacing

    def replace(self, **changes) -> "PetCtCase":
        return replace(self, **changes)

    def equals(self, other: "PetCtCase") -> bool:
        if (self.case_id, self.tracer) != (other.case_id, other.tracer):
            return False
        if (self.label is None) != (other.label is None):
            return False
        same_label = self.label is None or self.label.equals(other.label)
        return self.ct.equals(other.ct) and self.pet.equals(other.pet) and same_label
