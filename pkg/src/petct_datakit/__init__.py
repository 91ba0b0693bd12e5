"""PET/CT data-centric toolkit: augmentation, SUV postprocessing, metrics and
deadline-aware ensembling/TTA scheduling around a fixed segmentation network."""
from .augment import (
    AugmentScheme,
    TransformKind,
    TransformSpec,
    apply_scheme,
    apply_scheme_with_provenance,
    baseline_scheme,
    gamma_transform,
    gaussian_noise,
    load_scheme,
    save_scheme,
    subtle_scheme,
    with_misalignment,
)
from .case import PetCtCase, Tracer
from .manifest import DatasetManifest, ManifestEntry, scan_directory
from .metrics import (
    CaseMetrics,
    MetricsReport,
    aggregate,
    dice,
    evaluate_case,
    false_negative_volume_ml,
    false_positive_volume_ml,
)
from .misalign import MisalignConfig, apply_misalignment, sample_misalignment
from .nifti import NiftiError, load_nifti, save_nifti
from .postprocess import suv_mask
from .rng import derive_seed, substream
from .scheduler import (
    SchedulerBudget,
    ScheduleTrace,
    plan_ensemble,
    plan_tta,
    run_dynamic_inference,
    tta_transform_sequence,
)
from .volume import (
    ComponentLabeling,
    Kind,
    RigidParams,
    Volume3,
    apply_affine,
    apply_rigid,
    connected_components,
    mirror,
    volume_ml,
)

__version__ = "0.1.0"
