import numpy as np
import pytest

from petct_datakit import Kind, PetCtCase, Tracer, Volume3


def make_case(dims=(6, 5, 4), seed=0, case_id="case0", tracer=Tracer.FDG, spacing=(2.0, 2.0, 3.0)):
    rng = np.random.default_rng(seed)
    ct = Volume3(rng.normal(0.0, 200.0, dims), spacing, kind=Kind.HU)
    pet = Volume3(rng.gamma(2.0, 1.0, dims), spacing, kind=Kind.SUV)
    label = Volume3((rng.random(dims) < 0.2).astype(np.uint8), spacing, kind=Kind.BINARY)
    return PetCtCase(case_id, tracer, ct, pet, label)


@pytest.fixture
def case():
    return make_case()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
