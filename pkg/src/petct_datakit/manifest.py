"""Dataset manifests: which CT/PET/label files belong to which case."""
from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from typing import List, Optional

from .case import PetCtCase, Tracer
from .nifti import load_nifti
from .volume import Kind

__all__ = ["ManifestEntry", "DatasetManifest", "scan_directory"]

_SCAN_RE = re.compile(r"^(?P<case_id>.+)_(?P<role>ct|pet|label)\.nii\.gz$")


@dataclass(frozen=True)
class ManifestEntry:
    case_id: str
    tracer: Tracer
    ct_path: str
    pet_path: str
    label_path: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "tracer", Tracer(self.tracer))

    def to_dict(self) -> dict:
        d = {"case_id": self.case_id, "tracer": self.tracer.value, "ct_path": self.ct_path, "pet_path": self.pet_path}
        if self.label_path is not None:
            d["label_path"] = self.label_path
        return d


@dataclass
class DatasetManifest:
    """Case list with paths relative to ``root``."""

    cases: List[ManifestEntry]
    root: str = "."

    def __post_init__(self):
        ids = [c.case_id for c in self.cases]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise ValueError(f"duplicate case ids in manifest: {dupes}")

    def resolve(self, rel: str) -> str:
        return rel if os.path.isabs(rel) else os.path.join(self.root, rel)

    def missing_files(self) -> List[str]:
        out = []
        for c in self.cases:
            for rel in (c.ct_path, c.pet_path, c.label_path):
                if rel is not None and not os.path.exists(self.resolve(rel)):
                    out.append(f"{c.case_id}: {self.resolve(rel)}")
        return out

    def load_case(self, entry: ManifestEntry, with_label: bool = True) -> PetCtCase:
        ct = load_nifti(self.resolve(entry.ct_path), Kind.HU)
        pet = load_nifti(self.resolve(entry.pet_path), Kind.SUV)
        label = None
        if with_label and entry.label_path is not None:
            label = load_nifti(self.resolve(entry.label_path), Kind.BINARY)
        return PetCtCase(entry.case_id, entry.tracer, ct, pet, label)

    def to_dict(self) -> dict:
        return {"root": self.root, "cases": [c.to_dict() for c in self.cases]}

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        """Read a manifest; a relative ``root`` is taken relative to the file."""
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        root = d.get("root", ".")
        if not os.path.isabs(root):
            root = os.path.normpath(os.path.join(os.path.dirname(os.path.abspath(path)), root))
        return cls([ManifestEntry(**c) for c in d["cases"]], root)


def scan_directory(directory: str, tracer: Tracer = Tracer.FDG) -> DatasetManifest:
    """Build a manifest from ``<case_id>_{ct,pet,label}.nii.gz`` files.

    Cases without both a CT and a PET file are skipped.
    """
    found = {}
    for name in sorted(os.listdir(directory)):
        m = _SCAN_RE.match(name)
        if m:
            found.setdefault(m["case_id"], {})[m["role"]] = name
    cases = [
        ManifestEntry(cid, tracer, roles["ct"], roles["pet"], roles.get("label"))
        for cid, roles in sorted(found.items())
        if "ct" in roles and "pet" in roles
    ]
    return DatasetManifest(cases, os.path.abspath(directory))
