"""Device and workload model.

Compute units, per-kernel benchmark times, DNN layer specs, device profiles,
and workload mixes, plus a seeded synthetic profile generator that stands in
for on-board benchmarking. Layer cost on a unit is the sum of its kernel
times on that unit.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .errors import ProfileError

OP_KINDS = ("conv", "pool", "fc", "act")


class UnitKind(Enum):
    GPU = "gpu"
    BIG = "big"
    LITTLE = "little"


@dataclass(frozen=True)
class ComputeUnit:
    id: int
    name: str
    kind: UnitKind


@dataclass(frozen=True)
class KernelProfile:
    """One kernel of a layer with its measured time on every unit."""

    name: str
    time_ms: dict[int, float]

    def __post_init__(self):
        for unit, t in self.time_ms.items():
            if t <= 0:
                raise ProfileError(
                    f"kernel {self.name!r}: non-positive time {t} on unit {unit}"
                )


@dataclass(frozen=True)
class LayerFeatures:
    """Shape descriptors used only by the linear-regression baseline."""

    op_kind: str
    in_elems: int
    out_elems: int
    macs: int

    def __post_init__(self):
        if min(self.in_elems, self.out_elems, self.macs) < 1:
            raise ProfileError(f"layer feature counts must be >= 1, got {self}")


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kernels: tuple[KernelProfile, ...]
    features: LayerFeatures

    def __post_init__(self):
        if not self.kernels:
            raise ProfileError(f"layer {self.name!r} has no kernels")


@dataclass(frozen=True)
class DnnModel:
    name: str
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        if not self.layers:
            raise ProfileError(f"model {self.name!r} has no layers")

    @property
    def num_layers(self) -> int:
        return len(self.layers)


@dataclass(frozen=True)
class DeviceProfile:
    """The benchmark database: units, models, and the per-boundary transfer cost."""

    units: tuple[ComputeUnit, ...]
    models: tuple[DnnModel, ...]
    transfer_ms: float = 0.5

    @property
    def num_units(self) -> int:
        return len(self.units)

    @property
    def max_layers(self) -> int:
        """Padding width: the largest layer count across models."""
        return max(m.num_layers for m in self.models)

    def gpu_unit(self) -> ComputeUnit:
        gpus = [u for u in self.units if u.kind is UnitKind.GPU]
        if not gpus:
            raise ProfileError("profile has no GPU unit")
        return gpus[0]

    def model_index(self, name: str) -> int:
        for i, m in enumerate(self.models):
            if m.name == name:
                return i
        raise ProfileError(f"profile has no model named {name!r}")

    def validate(self) -> None:
        """Check cross-type invariants; raises ProfileError on the first violation."""
        if not self.models:
            raise ProfileError("profile has no models")
        ids = [u.id for u in self.units]
        if ids != list(range(len(ids))):
            raise ProfileError(f"unit ids must be contiguous from 0, got {ids}")
        if sum(1 for u in self.units if u.kind is UnitKind.GPU) != 1:
            raise ProfileError("profile must have exactly one GPU unit")
        if self.transfer_ms < 0:
            raise ProfileError(f"negative transfer_ms {self.transfer_ms}")
        names = [m.name for m in self.models]
        if len(set(names)) != len(names):
            raise ProfileError(f"duplicate model names in profile: {names}")
        for model in self.models:
            for layer in model.layers:
                for kernel in layer.kernels:
                    if set(kernel.time_ms) != set(ids):
                        raise ProfileError(
                            f"kernel {kernel.name!r} in {model.name}/{layer.name} "
                            f"does not cover all units {ids}"
                        )


@dataclass(frozen=True)
class Workload:
    """An ordered mix of distinct models, by index into the profile's model list."""

    model_indices: tuple[int, ...]

    def __post_init__(self):
        if len(set(self.model_indices)) != len(self.model_indices):
            raise ValueError(f"workload models must be distinct: {self.model_indices}")
        if any(i < 0 for i in self.model_indices):
            raise ValueError(f"negative model index in {self.model_indices}")

    def __len__(self) -> int:
        return len(self.model_indices)

    def validate_for(self, profile: DeviceProfile) -> None:
        for i in self.model_indices:
            if i >= len(profile.models):
                raise ValueError(f"model index {i} out of range for profile")


def workload_from_names(profile: DeviceProfile, names: list[str]) -> Workload:
    return Workload(tuple(profile.model_index(n) for n in names))


def layer_cost(layer: LayerSpec, unit: int) -> float:
    """Execution time of a layer on a unit: the sum of its kernel times there."""
    total = 0.0
    for kernel in layer.kernels:
        try:
            total += kernel.time_ms[unit]
        except KeyError:
            raise ProfileError(
                f"kernel {kernel.name!r} has no time for unit {unit}"
            ) from None
    return total


def model_cost(model: DnnModel, unit: int) -> float:
    return sum(layer_cost(layer, unit) for layer in model.layers)


# ---------------------------------------------------------------------------
# Synthetic profile generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs for the synthetic benchmark generator.

    unit_factors are cost multipliers per unit (GPU, big CPU, LITTLE CPU);
    jitter is a per-(layer, unit) affinity factor so that no unit dominates
    on every layer.
    """

    unit_factors: tuple[float, float, float] = (1.0, 3.0, 8.0)
    layer_range: tuple[int, int] = (5, 30)
    base_ms_range: tuple[float, float] = (0.5, 6.0)
    kernels_range: tuple[int, int] = (1, 4)
    jitter_range: tuple[float, float] = (0.7, 1.3)
    transfer_ms: float = 0.5


_UNIT_NAMES = ("gpu", "big-cpu", "little-cpu")
_UNIT_KINDS = (UnitKind.GPU, UnitKind.BIG, UnitKind.LITTLE)


def generate_profile(
    num_models: int, seed: int, config: GeneratorConfig | None = None
) -> DeviceProfile:
    """Build a deterministic synthetic DeviceProfile.

    Every layer's time on unit u is base * unit_factors[u] * jitter(layer, u),
    split across 1..4 kernels. Identical (num_models, seed, config) always
    yields an identical profile.
    """
    if num_models < 1:
        raise ValueError(f"num_models must be >= 1, got {num_models}")
    cfg = config or GeneratorConfig()
    rng = random.Random(seed)

    units = tuple(
        ComputeUnit(id=i, name=_UNIT_NAMES[i], kind=_UNIT_KINDS[i])
        for i in range(len(cfg.unit_factors))
    )

    models = []
    for mi in range(num_models):
        n_layers = rng.randint(*cfg.layer_range)
        layers = []
        for li in range(n_layers):
            base = rng.uniform(*cfg.base_ms_range)
            unit_times = [
                base * cfg.unit_factors[u.id] * rng.uniform(*cfg.jitter_range)
                for u in units
            ]
            n_kernels = rng.randint(*cfg.kernels_range)
            shares = [rng.uniform(0.2, 1.0) for _ in range(n_kernels)]
            total_share = sum(shares)
            kernels = tuple(
                KernelProfile(
                    name=f"l{li:02d}k{ki}",
                    time_ms={
                        u.id: unit_times[u.id] * shares[ki] / total_share
                        for u in units
                    },
                )
                for ki in range(n_kernels)
            )
            features = LayerFeatures(
                op_kind=rng.choice(OP_KINDS),
                in_elems=max(1, round(base * 5e4 * rng.uniform(0.8, 1.2))),
                out_elems=max(1, round(base * 4e4 * rng.uniform(0.8, 1.2))),
                macs=max(1, round(base * 2e6 * rng.uniform(0.85, 1.15))),
            )
            layers.append(
                LayerSpec(name=f"layer{li:02d}", kernels=kernels, features=features)
            )
        models.append(DnnModel(name=f"net{mi:02d}", layers=tuple(layers)))

    profile = DeviceProfile(
        units=units, models=tuple(models), transfer_ms=cfg.transfer_ms
    )
    profile.validate()
    return profile


# ---------------------------------------------------------------------------
# JSON serialization (strict schema, unknown keys rejected)
# ---------------------------------------------------------------------------

def _check_keys(obj: dict, allowed: tuple[str, ...], ctx: str) -> None:
    if not isinstance(obj, dict):
        raise ProfileError(f"{ctx}: expected an object, got {type(obj).__name__}")
    extra = set(obj) - set(allowed)
    if extra:
        raise ProfileError(f"{ctx}: unknown keys {sorted(extra)}")
    missing = set(allowed) - set(obj)
    if missing:
        raise ProfileError(f"{ctx}: missing keys {sorted(missing)}")


def profile_to_dict(profile: DeviceProfile) -> dict:
    return {
        "units": [
            {"id": u.id, "name": u.name, "kind": u.kind.value} for u in profile.units
        ],
        "transfer_ms": profile.transfer_ms,
        "models": [
            {
                "name": m.name,
                "layers": [
                    {
                        "name": layer.name,
                        "kernels": [
                            {
                                "name": k.name,
                                "time_ms": {
                                    str(uid): t for uid, t in sorted(k.time_ms.items())
                                },
                            }
                            for k in layer.kernels
                        ],
                        "features": {
                            "op_kind": layer.features.op_kind,
                            "in_elems": layer.features.in_elems,
                            "out_elems": layer.features.out_elems,
                            "macs": layer.features.macs,
                        },
                    }
                    for layer in m.layers
                ],
            }
            for m in profile.models
        ],
    }


def profile_from_dict(data: dict) -> DeviceProfile:
    _check_keys(data, ("units", "transfer_ms", "models"), "profile")
    units = []
    for i, ud in enumerate(data["units"]):
        _check_keys(ud, ("id", "name", "kind"), f"units[{i}]")
        try:
            kind = UnitKind(ud["kind"])
        except ValueError:
            raise ProfileError(f"units[{i}]: unknown kind {ud['kind']!r}") from None
        units.append(ComputeUnit(id=int(ud["id"]), name=str(ud["name"]), kind=kind))

    models = []
    for mi, md in enumerate(data["models"]):
        _check_keys(md, ("name", "layers"), f"models[{mi}]")
        layers = []
        for li, ld in enumerate(md["layers"]):
            ctx = f"models[{mi}].layers[{li}]"
            _check_keys(ld, ("name", "kernels", "features"), ctx)
            kernels = []
            for ki, kd in enumerate(ld["kernels"]):
                _check_keys(kd, ("name", "time_ms"), f"{ctx}.kernels[{ki}]")
                times = {}
                for key, value in kd["time_ms"].items():
                    try:
                        uid = int(key)
                    except ValueError:
                        raise ProfileError(
                            f"{ctx}.kernels[{ki}]: non-integer unit id {key!r}"
                        ) from None
                    times[uid] = float(value)
                kernels.append(KernelProfile(name=str(kd["name"]), time_ms=times))
            fd = ld["features"]
            _check_keys(
                fd, ("op_kind", "in_elems", "out_elems", "macs"), f"{ctx}.features"
            )
            features = LayerFeatures(
                op_kind=str(fd["op_kind"]),
                in_elems=int(fd["in_elems"]),
                out_elems=int(fd["out_elems"]),
                macs=int(fd["macs"]),
            )
            layers.append(
                LayerSpec(name=str(ld["name"]), kernels=tuple(kernels), features=features)
            )
        models.append(DnnModel(name=str(md["name"]), layers=tuple(layers)))

    profile = DeviceProfile(
        units=tuple(units),
        models=tuple(models),
        transfer_ms=float(data["transfer_ms"]),
    )
    profile.validate()
    return profile


def save_profile(profile: DeviceProfile, path: str | Path) -> None:
    Path(path).write_text(json.dumps(profile_to_dict(profile), indent=2) + "\n")


def load_profile(path: str | Path) -> DeviceProfile:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"profile file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ProfileError(f"{p}: invalid JSON ({e})") from None
    return profile_from_dict(data)
