"""Deterministic pipeline throughput oracle.

Given a workload and a per-layer unit mapping, computes per-DNN rates,
per-unit rates, and average throughput under pipeline bottleneck plus a
uniform shared-unit contention scaling. Also provides mapping combinatorics,
uniform random mappings, and exhaustive search for small instances.

The throughput model, with times in ms and rates in inferences/second:

  1. effective stage time  e(s) = cost(s) + transfer_ms if s is not its
     model's first stage, else cost(s)
  2. standalone rate       r_m = 1000 / max over s in m of e(s)
  3. raw unit load         L_u = sum over stages s on u of r_m(s) * e(s) / 1000
  4. contention scaling    theta = min(1, 1 / max_u L_u)
  5. per-DNN rate          x_m = theta * r_m
  6. per-unit rate         y_u = sum of x_m over models with a stage on u
  7. average throughput    T = sum(x_m) / M
"""

from __future__ import annotations

import itertools
import json
import math
import random
from dataclasses import dataclass
from pathlib import Path

from .errors import MappingError, SearchSpaceError
from .workload import DeviceProfile, Workload, layer_cost

DEFAULT_ENUM_CAP = 10_000_000


@dataclass(frozen=True)
class Mapping:
    """Per-model unit assignment, one unit id per layer."""

    assignments: tuple[tuple[int, ...], ...]

    def to_dict(self, profile: DeviceProfile, workload: Workload) -> dict:
        return {
            "workload": [profile.models[i].name for i in workload.model_indices],
            "assignments": [list(a) for a in self.assignments],
        }


@dataclass(frozen=True)
class Stage:
    """A maximal run of one model's consecutive layers on a single unit."""

    model_index: int
    unit: int
    layer_range: tuple[int, int]  # inclusive
    cost_ms: float


@dataclass(frozen=True)
class ThroughputReport:
    per_dnn_inf_s: tuple[float, ...]
    per_unit_inf_s: tuple[float, ...]
    avg_throughput: float
    unit_utilization: tuple[float, ...]
    theta: float

    def to_dict(self) -> dict:
        return {
            "per_dnn_inf_s": list(self.per_dnn_inf_s),
            "per_unit_inf_s": list(self.per_unit_inf_s),
            "avg_throughput": self.avg_throughput,
            "unit_utilization": list(self.unit_utilization),
            "theta": self.theta,
        }


def validate_mapping(
    mapping: Mapping, profile: DeviceProfile, workload: Workload
) -> None:
    workload.validate_for(profile)
    if len(mapping.assignments) != len(workload):
        raise MappingError(
            f"mapping has {len(mapping.assignments)} models, workload has {len(workload)}"
        )
    for pos, model_idx in enumerate(workload.model_indices):
        model = profile.models[model_idx]
        assignment = mapping.assignments[pos]
        if len(assignment) != model.num_layers:
            raise MappingError(
                f"model {model.name!r}: {len(assignment)} assignments "
                f"for {model.num_layers} layers"
            )
        for unit in assignment:
            if not 0 <= unit < profile.num_units:
                raise MappingError(f"unit id {unit} out of range")


def stage_count(assignment: tuple[int, ...] | list[int]) -> int:
    """Number of maximal runs of equal unit ids."""
    if not assignment:
        return 0
    return 1 + sum(1 for a, b in zip(assignment, assignment[1:]) if a != b)


def stages_of(
    mapping: Mapping, profile: DeviceProfile, workload: Workload
) -> list[list[Stage]]:
    """Run-length group each model's assignment into pipeline stages."""
    validate_mapping(mapping, profile, workload)
    per_model = []
    for pos, model_idx in enumerate(workload.model_indices):
        model = profile.models[model_idx]
        assignment = mapping.assignments[pos]
        stages = []
        start = 0
        for l in range(1, len(assignment) + 1):
            if l == len(assignment) or assignment[l] != assignment[start]:
                unit = assignment[start]
                cost = sum(layer_cost(model.layers[j], unit) for j in range(start, l))
                stages.append(
                    Stage(model_index=pos, unit=unit, layer_range=(start, l - 1), cost_ms=cost)
                )
                start = l
        per_model.append(stages)
    return per_model


def simulate(
    workload: Workload, mapping: Mapping, profile: DeviceProfile
) -> ThroughputReport:
    """Score a mapping; deterministic and pure. See the module docstring."""
    if len(workload) == 0:
        raise ValueError("cannot simulate an empty workload")
    per_model_stages = stages_of(mapping, profile, workload)

    # steps 1-2: effective stage times and standalone bottleneck rates
    eff_times = []
    rates = []
    for stages in per_model_stages:
        times = [
            s.cost_ms + (profile.transfer_ms if i > 0 else 0.0)
            for i, s in enumerate(stages)
        ]
        eff_times.append(times)
        rates.append(1000.0 / max(times))

    # step 3: raw per-unit load
    raw_load = [0.0] * profile.num_units
    for stages, times, r in zip(per_model_stages, eff_times, rates):
        for s, e in zip(stages, times):
            raw_load[s.unit] += r * e / 1000.0

    # steps 4-7
    theta = min(1.0, 1.0 / max(raw_load))
    x = [theta * r for r in rates]
    y = [0.0] * profile.num_units
    for stages, xm in zip(per_model_stages, x):
        for unit in {s.unit for s in stages}:
            y[unit] += xm
    return ThroughputReport(
        per_dnn_inf_s=tuple(x),
        per_unit_inf_s=tuple(y),
        avg_throughput=sum(x) / len(x),
        unit_utilization=tuple(theta * l for l in raw_load),
        theta=theta,
    )


# ---------------------------------------------------------------------------
# Combinatorics and enumeration
# ---------------------------------------------------------------------------

def binomial(n: int, k: int) -> int:
    return math.comb(n, k)


def count_assignments(n_layers: int, n_units: int, max_stages: int) -> int:
    """Exact number of per-layer unit assignments with at most max_stages stages.

    An assignment with s stages is a choice of s-1 cut points among n-1
    boundaries times a unit sequence with distinct neighbors.
    """
    if min(n_layers, n_units, max_stages) < 1:
        raise ValueError("n_layers, n_units, max_stages must all be >= 1")
    total = 0
    for s in range(1, max_stages + 1):
        total += (
            math.comb(n_layers - 1, s - 1) * n_units * (n_units - 1) ** (s - 1)
        )
    return total


def iter_assignments(n_layers: int, n_units: int, max_stages: int):
    """Yield all valid per-model assignments in lexicographic order."""

    def rec(prefix: list[int], stages: int):
        if len(prefix) == n_layers:
            yield tuple(prefix)
            return
        last = prefix[-1] if prefix else -1
        for u in range(n_units):
            ns = stages + (1 if u != last else 0)
            if ns <= max_stages:
                prefix.append(u)
                yield from rec(prefix, ns)
                prefix.pop()

    yield from rec([], 0)


def exhaustive_best(
    workload: Workload,
    profile: DeviceProfile,
    max_stages: int,
    cap: int = DEFAULT_ENUM_CAP,
) -> tuple[Mapping, ThroughputReport]:
    """Brute-force the best mapping by average throughput.

    Ties break toward the lexicographically smallest concatenated assignment
    vector, which is the first one encountered in enumeration order.
    """
    workload.validate_for(profile)
    if len(workload) == 0:
        raise ValueError("empty workload")
    layer_counts = [profile.models[i].num_layers for i in workload.model_indices]
    sizes = [count_assignments(n, profile.num_units, max_stages) for n in layer_counts]
    total = math.prod(sizes)
    if total > cap:
        raise SearchSpaceError(f"{total} mappings exceed the cap of {cap}")

    per_model = [
        list(iter_assignments(n, profile.num_units, max_stages)) for n in layer_counts
    ]
    best_mapping = None
    best_report = None
    for combo in itertools.product(*per_model):
        mapping = Mapping(assignments=combo)
        report = simulate(workload, mapping, profile)
        if best_report is None or report.avg_throughput > best_report.avg_throughput:
            best_mapping, best_report = mapping, report
    return best_mapping, best_report


def _random_assignment(
    n_layers: int, n_units: int, max_stages: int, rng: random.Random
) -> tuple[int, ...]:
    s = rng.randint(1, min(max_stages, n_layers))
    cuts = sorted(rng.sample(range(1, n_layers), s - 1))
    bounds = [0] + cuts + [n_layers]
    units = [rng.randrange(n_units)]
    for _ in range(s - 1):
        units.append(rng.choice([u for u in range(n_units) if u != units[-1]]))
    assignment = []
    for seg, unit in enumerate(units):
        assignment.extend([unit] * (bounds[seg + 1] - bounds[seg]))
    return tuple(assignment)


def random_mapping_rng(
    workload: Workload, profile: DeviceProfile, max_stages: int, rng: random.Random
) -> Mapping:
    workload.validate_for(profile)
    if max_stages < 1:
        raise ValueError("max_stages must be >= 1")
    return Mapping(
        assignments=tuple(
            _random_assignment(
                profile.models[i].num_layers, profile.num_units, max_stages, rng
            )
            for i in workload.model_indices
        )
    )


def random_mapping(
    workload: Workload, profile: DeviceProfile, max_stages: int, seed: int
) -> Mapping:
    """Sample a mapping: uniform stage count, cut points, and unit runs per model."""
    return random_mapping_rng(workload, profile, max_stages, random.Random(seed))


# ---------------------------------------------------------------------------
# Mapping file I/O
# ---------------------------------------------------------------------------

def save_mapping(
    mapping: Mapping, profile: DeviceProfile, workload: Workload, path: str | Path
) -> None:
    Path(path).write_text(
        json.dumps(mapping.to_dict(profile, workload), indent=2) + "\n"
    )


def load_mapping(path: str | Path, profile: DeviceProfile) -> tuple[Workload, Mapping]:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"mapping file not found: {p}")
    data = json.loads(p.read_text())
    extra = set(data) - {"workload", "assignments"}
    if extra:
        raise MappingError(f"{p}: unknown keys {sorted(extra)}")
    workload = Workload(tuple(profile.model_index(n) for n in data["workload"]))
    mapping = Mapping(tuple(tuple(int(u) for u in a) for a in data["assignments"]))
    validate_mapping(mapping, profile, workload)
    return workload, mapping


def save_report(report: ThroughputReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
