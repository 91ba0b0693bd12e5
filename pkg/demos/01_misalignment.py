# # CT misalignment
#
# Only the CT moves. PET and the label stay where they are, so the network
# sees the kind of registration error that shows up in real scans.

import numpy as np

from petct_datakit import (
    Kind, MisalignConfig, PetCtCase, RigidParams, Tracer, Volume3,
    apply_misalignment, sample_misalignment,
)
from petct_datakit.rng import substream

# A toy case: a bright CT block and a hot PET spot on the same voxels.

dims = (16, 16, 4)
ct = np.full(dims, -1000.0)
ct[5:11, 5:11, :] = 40.0
pet = np.zeros(dims)
pet[7:9, 7:9, 1:3] = 6.0
label = (pet > 0).astype(np.uint8)
case = PetCtCase(
    "toy", Tracer.FDG,
    Volume3(ct, (2.0, 2.0, 3.0), kind=Kind.HU),
    Volume3(pet, (2.0, 2.0, 3.0), kind=Kind.SUV),
    Volume3(label, (2.0, 2.0, 3.0), kind=Kind.BINARY),
)

# Draw a few perturbations with the default config. Most draws do nothing.

cfg = MisalignConfig()
g = substream(7, "demo")
draws = [sample_misalignment(cfg, g) for _ in range(20)]
print("non-identity draws:", [d for d in draws if not d.is_identity])

# Apply the largest perturbation the default config allows.

moved = apply_misalignment(case, RigidParams(5.0, (2.0, 2.0, 0.0)), cfg)
print("CT changed:   ", not moved.ct.equals(case.ct))
print("PET unchanged:", moved.pet.equals(case.pet))
print("label unchanged:", moved.label.equals(case.label))
print("CT slice z=1 (rounded):")
print(np.round(moved.ct.data[:, :, 1]).astype(int))
