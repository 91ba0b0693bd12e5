# # SUV masking and evaluation
#
# Predicted voxels in tissue with SUV below 1.0 are dropped. Then we score
# the result with Dice, false positive volume and false negative volume.

import numpy as np

from petct_datakit import Kind, Volume3, aggregate, evaluate_case, suv_mask

spacing = (2.0, 2.0, 3.0)
gt = np.zeros((10, 10, 4), dtype=np.uint8)
gt[2:5, 2:5, 1:3] = 1

pet = np.full(gt.shape, 0.6)
pet[gt == 1] = 5.0

# The prediction finds the lesion and also a spurious blob in cold tissue.

pred = gt.copy()
pred[7:9, 7:9, 1] = 1

P = Volume3(pred, spacing, kind=Kind.BINARY)
G = Volume3(gt, spacing, kind=Kind.BINARY)
S = Volume3(pet, spacing, kind=Kind.SUV)

before = evaluate_case("c1", "FDG", P, G)
after = evaluate_case("c1", "FDG", suv_mask(P, S), G)
print("before masking:", before)
print("after masking: ", after)

# A second tracer gives a balanced Dice over both cohorts.

miss = Volume3(np.zeros_like(gt), spacing, kind=Kind.BINARY)
report = aggregate([after, evaluate_case("c2", "PSMA", miss, G)])
print(report.summary)
