"""End-to-end acceptance criteria. Each test prints one PASS/FAIL line.

Run alone with ``pytest -m acceptance -s`` or as part of the full suite.
"""
import hashlib
import json
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import make_case
from oracles import dice_bruteforce, index_shift, ml, source_coord, unmatched_voxels
from petct_datakit import (
    Kind,
    MetricsReport,
    MisalignConfig,
    RigidParams,
    TransformKind,
    Volume3,
    apply_misalignment,
    apply_rigid,
    apply_scheme,
    baseline_scheme,
    dice,
    false_negative_volume_ml,
    false_positive_volume_ml,
    mirror,
    sample_misalignment,
    subtle_scheme,
    suv_mask,
    with_misalignment,
)
from petct_datakit.rng import substream
from petct_datakit.scheduler import (
    ConstantPredictor,
    LatencyPredictor,
    SchedulerBudget,
    ScriptedClock,
    plan_ensemble,
    plan_tta,
    run_dynamic_inference,
)
from petct_datakit.volume import NEAREST

pytestmark = pytest.mark.acceptance

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def report(capsys):
    """Call ``report(n, name, ok, detail)`` once per criterion; asserts ``ok``."""

    def _report(number, name, ok, detail=""):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {name} {detail}".rstrip())
        assert ok, detail

    return _report


def test_criterion_1_misalignment_contract(report):
    start = time.perf_counter()
    cfg = MisalignConfig()
    case = make_case(dims=(4, 4, 2), seed=1)
    g = substream(20241018, "acceptance", "misalign")
    n = 100_000
    in_bounds = pet_label_kept = 0
    rot_fired = shift_fired = 0
    for _ in range(n):
        p = sample_misalignment(cfg, g)
        dx, dy, dz = p.shift_voxels
        in_bounds += abs(p.rotation_deg) <= 5.0 and abs(dx) <= 2.0 and abs(dy) <= 2.0 and dz == 0.0
        rot_fired += p.rotation_deg != 0.0
        shift_fired += p.shift_voxels != (0.0, 0.0, 0.0)
        out = apply_misalignment(case, p, cfg)
        pet_label_kept += (
            out.pet.data.tobytes() == case.pet.data.tobytes()
            and out.label.data.tobytes() == case.label.data.tobytes()
        )
    half = 2.576 * np.sqrt(0.1 * 0.9 / n)
    rates_ok = abs(rot_fired / n - 0.1) <= half and abs(shift_fired / n - 0.1) <= half
    elapsed = time.perf_counter() - start
    ok = in_bounds == n and pet_label_kept == n and rates_ok and elapsed < 30.0
    report(1, "misalignment contract", ok,
           f"(bounds {in_bounds}/{n}, pet+label kept {pet_label_kept}/{n}, "
           f"rates {rot_fired / n:.4f}/{shift_fired / n:.4f} within ±{half:.4f}, {elapsed:.1f}s)")


def test_criterion_2_metric_oracle_equivalence(report):
    start = time.perf_counter()
    g = np.random.default_rng(2)
    spacing = (2.0, 2.0, 3.0)
    worst_dice = 0.0
    mismatches = 0
    for i in range(1000):
        density = g.uniform(0.05, 0.5)
        p = (g.random((8, 8, 8)) < density).astype(np.uint8)
        q = (g.random((8, 8, 8)) < density).astype(np.uint8)
        pv, gv = Volume3(p, spacing, kind=Kind.BINARY), Volume3(q, spacing, kind=Kind.BINARY)
        worst_dice = max(worst_dice, abs(dice(pv, gv) - dice_bruteforce(p, q)))
        for conn in (6, 26):
            fp = ml(unmatched_voxels(p, q, conn), spacing)
            fn = ml(unmatched_voxels(q, p, conn), spacing)
            mismatches += false_positive_volume_ml(pv, gv, conn) != fp
            mismatches += false_negative_volume_ml(pv, gv, conn) != fn
    elapsed = time.perf_counter() - start
    ok = worst_dice <= 1e-12 and mismatches == 0 and elapsed < 60.0
    report(2, "metric oracle equivalence", ok,
           f"(max dice err {worst_dice:.1e}, fp/fn mismatches {mismatches}, {elapsed:.1f}s)")


def _constant_run(latency, budget):
    case = make_case(dims=(3, 3, 2))
    clock = ScriptedClock()
    preds = [
        LatencyPredictor(ConstantPredictor(Volume3(np.full(case.dims, 0.5), kind=Kind.PROB)), clock, float(latency))
        for _ in range(budget.max_models)
    ]
    return run_dynamic_inference(case, preds, budget, clock)[1]


def test_criterion_3_scheduler_budget_safety(report):
    start = time.perf_counter()
    budget = SchedulerBudget()
    violations = []
    for latency in range(1, 301):
        trace = _constant_run(latency, budget)
        n_tta = plan_tta(latency, budget)
        feasible = (1 + n_tta) * latency <= budget.ensemble_limit_s
        if trace.n_tta > 2 or trace.n_models > 5:
            violations.append((latency, "limits", trace.n_tta, trace.n_models))
        if feasible and trace.total_s > budget.ensemble_limit_s:
            violations.append((latency, "total", trace.total_s))
    t5, t60 = _constant_run(5, budget), _constant_run(60, budget)
    plans_ok = (t5.n_tta, t5.n_models) == (2, 5) and (t60.n_tta, t60.n_models) == (0, 2)
    plans_ok &= (plan_tta(5, budget), plan_ensemble(15, budget)) == (2, 5)
    plans_ok &= (plan_tta(60, budget), plan_ensemble(60, budget)) == (0, 2)
    elapsed = time.perf_counter() - start
    ok = not violations and plans_ok and elapsed < 10.0
    report(3, "scheduler budget safety", ok,
           f"(violations {violations[:3]}, 5s->{t5.n_tta} TTA/{t5.n_models} models, "
           f"60s->{t60.n_tta} TTA/{t60.n_models} models, {elapsed:.1f}s)")


def test_criterion_4_suv_masking(report):
    start = time.perf_counter()
    g = np.random.default_rng(4)
    failures = 0
    for _ in range(500):
        dims = tuple(int(v) for v in g.integers(2, 9, 3))
        pred = Volume3((g.random(dims) < 0.4).astype(np.uint8), kind=Kind.BINARY)
        pet_data = g.gamma(1.5, 1.0, dims)
        pet_data[g.random(dims) < 0.1] = 1.0
        pet = Volume3(pet_data, kind=Kind.SUV)
        t1, t2 = sorted(g.uniform(0.0, 3.0, 2))
        once = suv_mask(pred, pet)
        failures += not suv_mask(once, pet).equals(once)
        failures += bool(np.any(once.data > pred.data))
        failures += bool(np.any(suv_mask(pred, pet, t2).data > suv_mask(pred, pet, t1).data))
        failures += bool(np.any(once.data[(pred.data == 1) & (pet_data == 1.0)] != 1))
    boundary = suv_mask(
        Volume3(np.ones((3, 1, 1), dtype=np.uint8), kind=Kind.BINARY),
        Volume3(np.array([0.999999, 1.0, 1.000001]).reshape(3, 1, 1), kind=Kind.SUV),
    )
    boundary_ok = boundary.data.ravel().tolist() == [0, 1, 1]
    elapsed = time.perf_counter() - start
    ok = failures == 0 and boundary_ok and elapsed < 10.0
    report(4, "SUV masking", ok, f"(property failures {failures}, boundary kept {boundary_ok}, {elapsed:.1f}s)")


def test_criterion_5_geometry(report):
    g = np.random.default_rng(5)
    dims = (12, 11, 6)
    coeff = g.normal(size=3)
    offset = g.normal()
    x, y, z = np.indices(dims, dtype=float)
    field = Volume3(coeff[0] * x + coeff[1] * y + coeff[2] * z + offset)
    worst = 0.0
    interior_total = 0
    for _ in range(100):
        angle = g.uniform(-30.0, 30.0)
        shift = (g.uniform(-3, 3), g.uniform(-3, 3), g.uniform(-1, 1))
        out = apply_rigid(field, RigidParams(angle, shift))
        for q in np.ndindex(dims):
            src = source_coord(q, dims, angle, shift)
            if all(0 <= src[k] <= dims[k] - 1 for k in range(3)):
                interior_total += 1
                worst = max(worst, abs(out.data[q] - (float(np.dot(coeff, src)) + offset)))
    linear_ok = worst <= 1e-6 and interior_total > 0

    shift_ok = True
    arr = g.normal(size=(7, 6, 5))
    for _ in range(30):
        s = tuple(int(v) for v in g.integers(-3, 4, 3))
        out = apply_rigid(Volume3(arr), RigidParams(0.0, s), interp=NEAREST, pad_value=-7.0)
        shift_ok &= np.array_equal(out.data, index_shift(arr, s, -7.0))

    inv_ok = True
    for axes in ((), ("x",), ("y",), ("z",), ("x", "y"), ("x", "z"), ("y", "z"), ("x", "y", "z")):
        v = Volume3(g.normal(size=(5, 4, 3)), kind=Kind.HU)
        inv_ok &= mirror(mirror(v, axes), axes).equals(v)
    ok = linear_ok and shift_ok and inv_ok
    report(5, "geometry", ok,
           f"(linear field max err {worst:.1e} over {interior_total} voxels, "
           f"integer shifts {shift_ok}, mirror involution {inv_ok})")


def _checksum(case):
    h = hashlib.sha256()
    for v in (case.ct, case.pet, case.label):
        h.update(v.data.tobytes())
    return h.hexdigest()


def test_criterion_6_scheme_structure(report):
    K = TransformKind
    base, sub = baseline_scheme(), subtle_scheme()
    kept = [t for t in base.transforms if t.kind not in (K.GAUSSIAN_BLUR, K.GAMMA_INVERTED)]
    structure_ok = [t.kind for t in kept] == sub.kinds
    for b, s in zip(kept, sub.transforms):
        if b.kind is K.AFFINE:
            (brl, brh), (srl, srh) = b.amplitude["rotation_deg"], s.amplitude["rotation_deg"]
            (bsl, bsh), (ssl, ssh) = b.amplitude["scale"], s.amplitude["scale"]
            structure_ok &= brl < srl and srh < brh and bsl < ssl and ssh < bsh
            structure_ok &= b.probability == s.probability
        else:
            structure_ok &= b == s

    case = make_case(dims=(8, 7, 5), seed=6)
    sums = {}
    for scheme in (base, sub, with_misalignment(sub)):
        a = _checksum(apply_scheme(case, scheme, seed=606))
        b = _checksum(apply_scheme(case, scheme, seed=606))
        sums[scheme.name] = a == b
    ok = structure_ok and all(sums.values())
    report(6, "scheme structure and determinism", ok, f"(structure {structure_ok}, checksum-stable {sums})")


def test_criterion_7_published_summary_round_trip(report):
    text = (FIXTURES / "published_summary_subtle_misal.json").read_text()
    parsed = MetricsReport.from_json(text)
    again = MetricsReport.from_json(parsed.to_json())
    ok = json.loads(parsed.to_json()) == json.loads(text) and again == parsed
    ok &= round(parsed.dice_mean * 100, 2) == 54.08
    report(7, "published summary lossless round trip", ok, f"(dice_mean {parsed.dice_mean}, balanced {parsed.dice_balanced})")
