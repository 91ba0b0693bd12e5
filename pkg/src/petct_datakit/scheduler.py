"""Deadline-aware dynamic ensembling and mirror test-time augmentation.

The first forward pass of the first model is timed. Its latency decides how
many mirror TTA passes fit into the per-model TTA window, and the time the
first model needed (including its TTA passes) decides how many models fit
into the ensemble window. Every later model reuses the same TTA plan.

Time is read from an injected clock so schedules can be simulated exactly.
"""
from __future__ import annotations

import json
import math
import os
import shlex
import subprocess
import tempfile
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np

from .case import PetCtCase
from .nifti import load_nifti, save_nifti
from .volume import Kind, Volume3, mirror

__all__ = [
    "SchedulerBudget",
    "ScheduleTrace",
    "Predictor",
    "Clock",
    "MonotonicClock",
    "ScriptedClock",
    "ConstantPredictor",
    "EquivariantPredictor",
    "LatencyPredictor",
    "CommandPredictor",
    "mirror_case",
    "plan_tta",
    "plan_ensemble",
    "tta_transform_sequence",
    "run_dynamic_inference",
]

MIRROR_ORDER: Tuple[Tuple[str, ...], ...] = (
    ("x",), ("y",), ("z",), ("x", "y"), ("x", "z"), ("y", "z"), ("x", "y", "z"),
)

# guards floor() against float noise such as 25 / 12.5000000001
_EPS = 1e-9


@dataclass(frozen=True)
class SchedulerBudget:
    case_limit_s: float = 300.0
    ensemble_limit_s: float = 170.0
    tta_limit_per_model_s: float = 25.0
    max_tta: int = 2
    max_models: int = 5
    # False: the TTA window is additional to the first pass instead of including it
    tta_window_includes_first_pass: bool = True

    def __post_init__(self):
        if not 0 < self.tta_limit_per_model_s <= self.ensemble_limit_s <= self.case_limit_s:
            raise ValueError("budget must satisfy 0 < tta_limit_per_model_s <= ensemble_limit_s <= case_limit_s")
        if self.max_tta < 0 or self.max_tta > len(MIRROR_ORDER):
            raise ValueError(f"max_tta must be in [0, {len(MIRROR_ORDER)}]")
        if self.max_models < 1:
            raise ValueError("max_models must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "SchedulerBudget":
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ScheduleTrace:
    first_pass_s: float = 0.0
    n_tta: int = 0
    n_models: int = 0
    per_pass_s: List[float] = field(default_factory=list)
    total_s: float = 0.0
    decisions: List[str] = field(default_factory=list)
    degraded: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "ScheduleTrace":
        return cls(**d)


class Clock(Protocol):
    def now(self) -> float: ...


class MonotonicClock:
    def now(self) -> float:
        return time.perf_counter()


class ScriptedClock:
    """Simulated time that only moves when something calls :meth:`advance`."""

    def __init__(self, start: float = 0.0):
        self._t = float(start)

    def now(self) -> float:
        return self._t

    def advance(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("time cannot go backwards")
        self._t += seconds


class Predictor(Protocol):
    """Returns lesion probabilities for ``case`` mirrored along ``axes``.

    The output is in the mirrored frame; the scheduler undoes the mirror.
    An empty ``axes`` is a plain forward pass.
    """

    def predict(self, case: PetCtCase, axes: Tuple[str, ...]) -> Volume3: ...


def mirror_case(case: PetCtCase, axes: Sequence[str]) -> PetCtCase:
    if not axes:
        return case
    label = None if case.label is None else mirror(case.label, axes)
    return case.replace(ct=mirror(case.ct, axes), pet=mirror(case.pet, axes), label=label)


class ConstantPredictor:
    """Always predicts ``volume`` in the case frame."""

    def __init__(self, volume: Volume3):
        self.volume = volume

    def predict(self, case, axes=()):
        return mirror(self.volume, axes)


class EquivariantPredictor:
    """Voxelwise logistic map of PET SUV (plus a small CT term).

    Being voxelwise, it commutes with every mirror.
    """

    def __init__(self, suv_center: float = 2.5, suv_width: float = 0.5, ct_weight: float = 1e-4):
        self.suv_center = suv_center
        self.suv_width = suv_width
        self.ct_weight = ct_weight

    def predict(self, case, axes=()):
        c = mirror_case(case, axes)
        z = (c.pet.data - self.suv_center) / self.suv_width + self.ct_weight * c.ct.data
        prob = 1.0 / (1.0 + np.exp(-z))
        return c.pet.with_data(prob, kind=Kind.PROB)


class LatencyPredictor:
    """Wraps a predictor and advances a :class:`ScriptedClock` per call.

    ``latency`` is a constant, a per-call list (the last entry repeats) or a
    callable of the call index.
    """

    def __init__(self, inner, clock: ScriptedClock, latency: Union[float, Sequence[float], Callable[[int], float]]):
        self.inner = inner
        self.clock = clock
        self.latency = latency
        self.calls = 0

    def _next_latency(self) -> float:
        i = self.calls
        if callable(self.latency):
            return float(self.latency(i))
        if isinstance(self.latency, (int, float)):
            return float(self.latency)
        seq = list(self.latency)
        return float(seq[min(i, len(seq) - 1)])

    def predict(self, case, axes=()):
        dt = self._next_latency()
        self.calls += 1
        self.clock.advance(dt)
        return self.inner.predict(case, axes)


class CommandPredictor:
    """Runs an external command once per pass.

    ``command`` is a string or argv list with ``{ct}``, ``{pet}`` and ``{out}``
    placeholders. The mirrored CT and PET are written to a scratch directory;
    the command must write a probability NIfTI to ``{out}``.
    """

    def __init__(self, command: Union[str, Sequence[str]], timeout_s: Optional[float] = None):
        self.argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout_s = timeout_s

    def predict(self, case, axes=()):
        c = mirror_case(case, axes)
        with tempfile.TemporaryDirectory(prefix="petct-pass-") as tmp:
            paths = {k: os.path.join(tmp, f"{k}.nii.gz") for k in ("ct", "pet", "out")}
            save_nifti(c.ct, paths["ct"])
            save_nifti(c.pet, paths["pet"])
            argv = [a.format(**paths) for a in self.argv]
            subprocess.run(argv, check=True, timeout=self.timeout_s, capture_output=True)
            return load_nifti(paths["out"], Kind.PROB)


def plan_tta(first_pass_s: float, budget: SchedulerBudget) -> int:
    """Number of TTA passes such that all passes of one model fit the TTA window."""
    if first_pass_s <= 0:
        raise ValueError("first_pass_s must be positive")
    fit = math.floor(budget.tta_limit_per_model_s / first_pass_s + _EPS)
    if budget.tta_window_includes_first_pass:
        fit -= 1
    return min(budget.max_tta, max(0, fit))


def plan_ensemble(model_time_s: float, budget: SchedulerBudget) -> int:
    """Number of models (including the finished first one) that fit the ensemble window."""
    if model_time_s <= 0:
        raise ValueError("model_time_s must be positive")
    fit = math.floor(budget.ensemble_limit_s / model_time_s + _EPS)
    return max(1, min(budget.max_models, fit))


def tta_transform_sequence(n: int) -> List[Tuple[str, ...]]:
    if not 0 <= n <= len(MIRROR_ORDER):
        raise ValueError(f"at most {len(MIRROR_ORDER)} mirror transforms exist")
    return list(MIRROR_ORDER[:n])


def run_dynamic_inference(
    case: PetCtCase,
    predictors: Sequence[Predictor],
    budget: SchedulerBudget = SchedulerBudget(),
    clock: Optional[Clock] = None,
    latency_estimate: str = "first",
) -> Tuple[Volume3, ScheduleTrace]:
    """Ensemble ``predictors`` with mirror TTA inside the time budget.

    ``latency_estimate="first"`` fixes the ensemble size from the first model's
    time. ``"running"`` instead re-checks before each further model using the
    average model time so far.

    A failing pass never aborts the run: that model's remaining passes are
    skipped, the trace is flagged as degraded, and the output averages the
    passes that completed. Only a failure of the very first pass raises,
    since there is nothing to return.
    """
    if not predictors:
        raise ValueError("at least one predictor is required")
    if latency_estimate not in ("first", "running"):
        raise ValueError(f"unknown latency_estimate {latency_estimate!r}")
    clock = clock or MonotonicClock()
    trace = ScheduleTrace()
    # running mean: identical predictions average back to themselves exactly
    mean = np.zeros(case.dims, dtype=np.float64)
    n_done = 0

    def run_pass(model_idx: int, axes: Tuple[str, ...]) -> bool:
        nonlocal mean, n_done
        t0 = clock.now()
        try:
            out = predictors[model_idx].predict(case, axes)
            if out.dims != case.dims:
                raise ValueError(f"prediction dims {out.dims} != case dims {case.dims}")
            if out.kind is not Kind.PROB:
                raise ValueError(f"prediction kind {out.kind.value} is not PROB")
        except Exception as exc:
            trace.per_pass_s.append(clock.now() - t0)
            trace.degraded = True
            trace.decisions.append(f"model {model_idx} pass mirror={list(axes)} failed: {exc!r}")
            return False
        trace.per_pass_s.append(clock.now() - t0)
        n_done += 1
        mean += (mirror(out, axes).data - mean) / n_done
        return True

    start = clock.now()
    if not run_pass(0, ()):
        raise RuntimeError(f"first forward pass failed for case {case.case_id}: {trace.decisions[-1]}")
    trace.first_pass_s = trace.per_pass_s[0]
    trace.n_tta = plan_tta(trace.first_pass_s, budget)
    trace.decisions.append(
        f"first pass {trace.first_pass_s:.3f}s -> {trace.n_tta} TTA pass(es) "
        f"(window {budget.tta_limit_per_model_s}s, max {budget.max_tta})"
    )
    transforms = tta_transform_sequence(trace.n_tta)
    for axes in transforms:
        if not run_pass(0, axes):
            break
    models_used = 1
    model_time = clock.now() - start

    available = min(budget.max_models, len(predictors))
    if latency_estimate == "first":
        n_models = min(plan_ensemble(model_time, budget), available)
        trace.decisions.append(
            f"model 0 took {model_time:.3f}s -> ensemble of {n_models} model(s) "
            f"(window {budget.ensemble_limit_s}s, {len(predictors)} available)"
        )
    else:
        n_models = available
        trace.decisions.append(f"model 0 took {model_time:.3f}s; running-average planning enabled")

    for m in range(1, n_models):
        elapsed = clock.now() - start
        if latency_estimate == "running":
            avg = elapsed / m
            if elapsed + avg > budget.ensemble_limit_s + _EPS:
                trace.decisions.append(f"stop before model {m}: {elapsed:.3f}s + {avg:.3f}s exceeds window")
                break
        if not run_pass(m, ()):
            continue
        models_used += 1
        for axes in transforms:
            if not run_pass(m, axes):
                break

    trace.n_models = models_used
    trace.total_s = float(sum(trace.per_pass_s))
    trace.decisions.append(f"averaged {n_done} pass(es) from {models_used} model(s) in {trace.total_s:.3f}s")
    return case.pet.with_data(np.clip(mean, 0.0, 1.0), kind=Kind.PROB), trace
