"""Command-line entry point: ``petct-datakit <command> ...``.

Exit codes: 0 success, 1 data error (some case failed), 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import augment as aug
from .case import PetCtCase, Tracer
from .manifest import DatasetManifest, ManifestEntry, scan_directory
from .metrics import aggregate, evaluate_case
from .misalign import MisalignConfig
from .nifti import load_nifti, save_nifti
from .postprocess import DEFAULT_SUV_THRESHOLD, suv_mask
from .rng import derive_seed
from .scheduler import (
    EquivariantPredictor,
    LatencyPredictor,
    SchedulerBudget,
    ScriptedClock,
    run_dynamic_inference,
)
from .volume import Kind, Volume3

SEED_ENV = "PETCT_DATAKIT_SEED"
EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def _for_each_case(manifest: DatasetManifest, fn: Callable[[ManifestEntry], None], jobs: int) -> int:
    """Run ``fn`` per case, report failures on stderr, return an exit code."""

    def guarded(entry):
        try:
            fn(entry)
            return None
        except Exception as exc:
            return f"{entry.case_id}: {exc}"

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            errors = list(pool.map(guarded, manifest.cases))
    else:
        errors = [guarded(e) for e in manifest.cases]
    errors = [e for e in errors if e]
    for e in errors:
        print(f"error: {e}", file=sys.stderr)
    return EXIT_DATA if errors else EXIT_OK


def _resolve_scheme(spec: str) -> aug.AugmentScheme:
    """A scheme JSON path, or a preset name with optional ``+misal`` suffix."""
    if os.path.exists(spec):
        return aug.load_scheme(spec)
    base, _, suffix = spec.partition("+")
    presets = {"baseline": aug.baseline_scheme, "subtle": aug.subtle_scheme}
    if base not in presets or suffix not in ("", "misal"):
        raise UsageError(f"scheme {spec!r} is neither a file nor one of baseline, subtle (optionally +misal)")
    scheme = presets[base]()
    return aug.with_misalignment(scheme, MisalignConfig()) if suffix else scheme


def _load_manifest(path: str) -> DatasetManifest:
    try:
        return DatasetManifest.load(path)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc


def _pred_path(pred_dir: str, case_id: str) -> str:
    return os.path.join(pred_dir, f"{case_id}.nii.gz")


def cmd_augment(args) -> int:
    manifest = _load_manifest(args.manifest)
    try:
        scheme = _resolve_scheme(args.scheme)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise DataError(f"invalid scheme config {args.scheme}: {exc}") from exc
    seed = args.seed
    if seed is None:
        env = os.environ.get(SEED_ENV)
        if env is None:
            raise UsageError(f"--seed not given and {SEED_ENV} not set")
        try:
            seed = int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV}={env!r} is not an integer")

    def run(entry: ManifestEntry) -> None:
        case = manifest.load_case(entry)
        for r in range(args.repeats):
            rseed = derive_seed(seed, "repeat", r)
            out, events = aug.apply_scheme_with_provenance(case, scheme, rseed)
            dest = os.path.join(args.out, entry.case_id, f"r{r:03d}")
            os.makedirs(dest, exist_ok=True)
            save_nifti(out.ct, os.path.join(dest, "ct.nii.gz"))
            save_nifti(out.pet, os.path.join(dest, "pet.nii.gz"))
            if out.label is not None:
                save_nifti(out.label, os.path.join(dest, "label.nii.gz"))
            provenance = {
                "case_id": entry.case_id,
                "tracer": entry.tracer.value,
                "repeat": r,
                "seed": rseed,
                "scheme": scheme.name,
                "events": events,
            }
            with open(os.path.join(dest, "provenance.json"), "w", encoding="utf-8") as fh:
                json.dump(provenance, fh, indent=2)

    return _for_each_case(manifest, run, args.jobs)


def cmd_postprocess(args) -> int:
    single = args.pred is not None or args.pet is not None
    if single:
        if not (args.pred and args.pet and args.out):
            raise UsageError("single-file mode needs --pred, --pet and --out")
        try:
            pred = load_nifti(args.pred, Kind.BINARY)
            pet = load_nifti(args.pet, Kind.SUV)
            save_nifti(suv_mask(pred, pet, args.threshold), args.out)
        except (OSError, ValueError, TypeError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DATA
        return EXIT_OK

    if not (args.pred_dir and args.manifest and args.out_dir):
        raise UsageError("batch mode needs --pred-dir, --manifest and --out-dir")
    manifest = _load_manifest(args.manifest)
    os.makedirs(args.out_dir, exist_ok=True)

    def run(entry: ManifestEntry) -> None:
        pred = load_nifti(_pred_path(args.pred_dir, entry.case_id), Kind.BINARY)
        pet = load_nifti(manifest.resolve(entry.pet_path), Kind.SUV)
        save_nifti(suv_mask(pred, pet, args.threshold), _pred_path(args.out_dir, entry.case_id))

    return _for_each_case(manifest, run, args.jobs)


def cmd_evaluate(args) -> int:
    manifest = _load_manifest(args.manifest)
    results = {}

    def run(entry: ManifestEntry) -> None:
        if entry.label_path is None:
            raise ValueError("manifest entry has no label_path")
        pred = load_nifti(_pred_path(args.pred_dir, entry.case_id), Kind.BINARY)
        gt = load_nifti(manifest.resolve(entry.label_path), Kind.BINARY)
        results[entry.case_id] = evaluate_case(entry.case_id, entry.tracer, pred, gt, args.connectivity)

    code = _for_each_case(manifest, run, args.jobs)
    per_case = [results[c.case_id] for c in manifest.cases if c.case_id in results]
    if not per_case:
        print("error: no case could be evaluated", file=sys.stderr)
        return EXIT_DATA
    report = aggregate(per_case)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    report.write_csv(os.path.splitext(args.out)[0] + ".csv")
    return code


def parse_latency(spec: str) -> List[float]:
    """``constant:5`` / ``5`` or ``scripted:5,6,7`` / ``5,6,7`` (last value repeats)."""
    kind, _, body = spec.partition(":")
    if not body:
        kind, body = ("scripted" if "," in spec else "constant"), spec
    try:
        values = [float(v) for v in body.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"invalid latency spec {spec!r}")
    if kind not in ("constant", "scripted") or not values or not all(math.isfinite(v) and v > 0 for v in values):
        raise UsageError(f"invalid latency spec {spec!r}")
    if kind == "constant" and len(values) != 1:
        raise UsageError(f"constant latency takes one value, got {spec!r}")
    return values


def _sim_case(dims=(8, 8, 8)) -> PetCtCase:
    rng = np.random.default_rng(0)
    ct = Volume3(rng.normal(0, 100, dims), kind=Kind.HU)
    pet = Volume3(rng.gamma(2.0, 1.0, dims), kind=Kind.SUV)
    return PetCtCase("sim", Tracer.FDG, ct, pet)


def cmd_schedule_sim(args) -> int:
    latencies = parse_latency(args.latency)
    budget_kwargs = {}
    if args.budget:
        try:
            with open(args.budget, encoding="utf-8") as fh:
                budget_kwargs = json.load(fh)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read budget config {args.budget}: {exc}")
    if args.max_models is not None:
        budget_kwargs["max_models"] = args.max_models
    try:
        budget = SchedulerBudget(**budget_kwargs)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid budget: {exc}")

    clock = ScriptedClock()
    calls = [0]

    def latency(_):
        i = calls[0]
        calls[0] += 1
        return latencies[min(i, len(latencies) - 1)]

    n_predictors = args.predictors if args.predictors is not None else budget.max_models
    predictors = [LatencyPredictor(EquivariantPredictor(), clock, latency) for _ in range(n_predictors)]
    _, trace = run_dynamic_inference(_sim_case(), predictors, budget, clock, args.latency_estimate)
    text = trace.to_json()
    if args.out == "-":
        print(text)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    return EXIT_OK


def cmd_manifest(args) -> int:
    if not os.path.isdir(args.directory):
        raise UsageError(f"{args.directory} is not a directory")
    manifest = scan_directory(args.directory, Tracer(args.tracer))
    if not manifest.cases:
        print(f"error: no <case_id>_ct/pet.nii.gz pairs in {args.directory}", file=sys.stderr)
        return EXIT_DATA
    manifest.save(args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="petct-datakit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("augment", help="write augmented copies of every case plus provenance")
    a.add_argument("--manifest", required=True)
    a.add_argument("--scheme", required=True, help="scheme JSON, or baseline / subtle [+misal]")
    a.add_argument("--seed", type=int, default=None, help=f"falls back to ${SEED_ENV}")
    a.add_argument("--repeats", type=int, default=1)
    a.add_argument("--out", required=True)
    a.add_argument("--jobs", type=int, default=1)
    a.set_defaults(func=cmd_augment)

    pp = sub.add_parser("postprocess", help="mask predictions where SUV < threshold")
    pp.add_argument("--pred")
    pp.add_argument("--pet")
    pp.add_argument("--out")
    pp.add_argument("--pred-dir")
    pp.add_argument("--manifest")
    pp.add_argument("--out-dir")
    pp.add_argument("--threshold", type=float, default=DEFAULT_SUV_THRESHOLD)
    pp.add_argument("--jobs", type=int, default=1)
    pp.set_defaults(func=cmd_postprocess)

    e = sub.add_parser("evaluate", help="Dice / FPvol / FNvol report")
    e.add_argument("--pred-dir", required=True)
    e.add_argument("--manifest", required=True)
    e.add_argument("--connectivity", type=int, choices=(6, 18, 26), default=26)
    e.add_argument("--out", required=True, help="report JSON; the CSV goes next to it")
    e.add_argument("--jobs", type=int, default=1)
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("schedule-sim", help="simulate dynamic ensembling/TTA under synthetic latency")
    s.add_argument("--latency", required=True, help="constant:5 or scripted:5,6,7")
    s.add_argument("--budget", help="JSON with SchedulerBudget fields")
    s.add_argument("--max-models", type=int)
    s.add_argument("--predictors", type=int, help="number of available models (default: max_models)")
    s.add_argument("--latency-estimate", choices=("first", "running"), default="first")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_schedule_sim)

    m = sub.add_parser("manifest", help="manifest helpers")
    msub = m.add_subparsers(dest="manifest_command", required=True)
    scan = msub.add_parser("scan", help="build a manifest from <case_id>_{ct,pet,label}.nii.gz files")
    scan.add_argument("directory")
    scan.add_argument("--tracer", choices=[t.value for t in Tracer], default="FDG")
    scan.add_argument("--out", required=True)
    scan.set_defaults(func=cmd_manifest)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
