"""UWB time-of-flight ranging simulator, outlier filtering and sample aggregation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from statistics import median
from typing import Any, Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .model import ObjectDescriptor, RangingEstimate, RangingSample, Role, Semantics, ValidationError

DEFAULT_MAX_PLAUSIBLE = 1000.0
DEFAULT_RAIL_LENGTH = 7.0


@dataclass(frozen=True)
class ShortRangeBias:
    """Linear underestimation that grows as the nodes get closer than ``knee``.

    ``bias(d) = -slope * max(0, knee - d)``
    """

    knee: float = 1.5
    slope: float = 0.25

    def __call__(self, distance: float | np.ndarray) -> float | np.ndarray:
        if isinstance(distance, np.ndarray):
            return -self.slope * np.maximum(0.0, self.knee - distance)
        return -self.slope * max(0.0, self.knee - distance)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "short-range-linear", "knee_m": self.knee, "slope": self.slope}


def _no_bias(distance):
    return np.zeros_like(distance, dtype=float) if isinstance(distance, np.ndarray) else 0.0


@dataclass(frozen=True)
class NoiseModel:
    bias: Callable[[Any], Any] = field(default_factory=ShortRangeBias)
    jitter_sigma: float = 0.05
    outlier_probability: float = 0.001
    outlier_magnitude: float = 1500.0

    def __post_init__(self) -> None:
        if self.jitter_sigma < 0:
            raise ValidationError("jitter_sigma must be >= 0")
        if not 0 <= self.outlier_probability <= 1:
            raise ValidationError("outlier_probability must lie in [0, 1]")

    @classmethod
    def ideal(cls) -> "NoiseModel":
        return cls(bias=_no_bias, jitter_sigma=0.0, outlier_probability=0.0)

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "NoiseModel":
        bias_raw = raw.get("bias") or {"kind": "none"}
        kind = bias_raw.get("kind", "none")
        if kind == "short-range-linear":
            bias: Callable[[Any], Any] = ShortRangeBias(
                knee=float(bias_raw.get("knee_m", 1.5)), slope=float(bias_raw.get("slope", 0.25))
            )
        elif kind == "none":
            bias = _no_bias
        else:
            raise ValidationError(f"unknown bias kind {kind!r}")
        return cls(
            bias=bias,
            jitter_sigma=float(raw.get("jitter_sigma_m", 0.0)),
            outlier_probability=float(raw.get("outlier_probability", 0.0)),
            outlier_magnitude=float(raw.get("outlier_magnitude_m", 1500.0)),
        )

    def to_dict(self) -> dict[str, Any]:
        bias = self.bias.to_dict() if isinstance(self.bias, ShortRangeBias) else {"kind": "none"}
        return {
            "bias": bias,
            "jitter_sigma_m": self.jitter_sigma,
            "outlier_probability": self.outlier_probability,
            "outlier_magnitude_m": self.outlier_magnitude,
        }


def load_noise_model(path: str | Path) -> NoiseModel:
    return NoiseModel.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def sample_ranging(
    true_distance: float,
    model: NoiseModel,
    rng: np.random.Generator,
    size: int | None = None,
) -> float | np.ndarray:
    """Draw simulated range readings for a pair ``true_distance`` metres apart.

    Readings are ``max(0, d + bias(d) + jitter)``; with probability
    ``outlier_probability`` a reading is replaced by a value in
    ``[outlier_magnitude, 2 * outlier_magnitude)``.
    """
    if true_distance < 0:
        raise ValidationError("true distance must be >= 0")
    n = 1 if size is None else size
    base = true_distance + float(model.bias(true_distance))
    jitter = rng.normal(0.0, model.jitter_sigma, n) if model.jitter_sigma > 0 else np.zeros(n)
    values = np.maximum(0.0, base + jitter)
    if model.outlier_probability > 0:
        hit = rng.random(n) < model.outlier_probability
        values = np.where(hit, model.outlier_magnitude * (1.0 + rng.random(n)), values)
    return float(values[0]) if size is None else values


def filter_outliers(samples: Sequence[RangingSample], max_plausible: float = DEFAULT_MAX_PLAUSIBLE) -> list[RangingSample]:
    if max_plausible <= 0:
        raise ValidationError("max_plausible must be > 0")
    return [s for s in samples if s.distance <= max_plausible]


def aggregate(samples: Sequence[RangingSample]) -> RangingEstimate:
    """Median of a same-pair sample batch."""
    if not samples:
        raise ValidationError("cannot aggregate an empty sample list")
    pair = samples[0].pair
    if any(s.pair != pair for s in samples):
        raise ValidationError("samples mix several object pairs")
    first = samples[0]
    return RangingEstimate(
        a=first.a,
        b=first.b,
        distance=float(median(s.distance for s in samples)),
        sample_count=len(samples),
        semantics=Semantics.INTER_CENTRE,
    )


@dataclass(frozen=True)
class RailScenario:
    fixed_nodes: tuple[ObjectDescriptor, ...]
    mobile_start: tuple[float, float, float] = (0.0, 0.0, 0.0)
    step_length: float = 0.25
    step_count: int = 28
    samples_per_position: int = 1000
    axis: tuple[float, float, float] = (1.0, 0.0, 0.0)
    rail_length: float = DEFAULT_RAIL_LENGTH
    mobile_id: str = "M"

    def __post_init__(self) -> None:
        if not self.step_length > 0:
            raise ValidationError("step_length must be > 0")
        if self.step_count < 0:
            raise ValidationError("step_count must be >= 0")
        if self.samples_per_position < 1:
            raise ValidationError("samples_per_position must be >= 1")
        if self.step_length * self.step_count > self.rail_length + 1e-9:
            raise ValidationError(
                f"span {self.step_length * self.step_count:g} m exceeds rail length {self.rail_length:g} m"
            )
        norm = math.hypot(*self.axis)
        if not math.isclose(norm, 1.0, rel_tol=1e-9):
            raise ValidationError("axis must be a unit vector")
        if not self.fixed_nodes:
            raise ValidationError("scenario needs at least one fixed node")
        for node in self.fixed_nodes:
            if node.centre is None:
                raise ValidationError(f"fixed node {node.id!r} has no position")

    def position(self, k: int) -> tuple[float, float, float]:
        s = k * self.step_length
        return tuple(p + s * a for p, a in zip(self.mobile_start, self.axis))  # type: ignore[return-value]

    def node(self, node_id: str) -> ObjectDescriptor:
        for n in self.fixed_nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def node_distance(self, a: str, b: str) -> float:
        return math.dist(self.node(a).centre, self.node(b).centre)  # type: ignore[arg-type]

    def replace(self, **changes: Any) -> "RailScenario":
        return replace(self, **changes)

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "RailScenario":
        nodes = tuple(
            ObjectDescriptor(
                id=n["id"],
                label=n.get("label", n["id"]),
                room=n.get("room", "testbed"),
                role=Role.FIXED,
                centre=tuple(float(c) for c in n["position"]),  # type: ignore[arg-type]
            )
            for n in raw["fixed_nodes"]
        )
        return cls(
            fixed_nodes=nodes,
            mobile_start=tuple(float(c) for c in raw.get("mobile_start", (0.0, 0.0, 0.0))),  # type: ignore[arg-type]
            step_length=float(raw.get("step_length_m", 0.25)),
            step_count=int(raw.get("step_count", 28)),
            samples_per_position=int(raw.get("samples_per_position", 1000)),
            axis=tuple(float(c) for c in raw.get("axis", (1.0, 0.0, 0.0))),  # type: ignore[arg-type]
            rail_length=float(raw.get("rail_length_m", DEFAULT_RAIL_LENGTH)),
            mobile_id=raw.get("mobile_id", "M"),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "fixed_nodes": [
                {"id": n.id, "label": n.label, "room": n.room, "position": list(n.centre or ())} for n in self.fixed_nodes
            ],
            "mobile_id": self.mobile_id,
            "mobile_start": list(self.mobile_start),
            "step_length_m": self.step_length,
            "step_count": self.step_count,
            "samples_per_position": self.samples_per_position,
            "axis": list(self.axis),
            "rail_length_m": self.rail_length,
        }


def load_scenario(path: str | Path) -> RailScenario:
    return RailScenario.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class TraceEntry:
    """One rail position: ground truth plus the cleaned estimate per fixed node.

    ``samples`` keeps the raw (unfiltered) readings when requested.
    """

    index: int
    position: tuple[float, float, float]
    true_distances: dict[str, float]
    estimates: dict[str, RangingEstimate]
    outliers_removed: dict[str, int]
    samples: dict[str, list[float]] | None = None

    def to_record(self) -> dict[str, Any]:
        record: dict[str, Any] = {
            "index": self.index,
            "position": list(self.position),
            "true_distance_m": self.true_distances,
            "estimates": {
                node: {"distance_m": est.distance, "sample_count": est.sample_count}
                for node, est in self.estimates.items()
            },
            "outliers_removed": self.outliers_removed,
        }
        if self.samples is not None:
            record["samples_m"] = self.samples
        return record

    @classmethod
    def from_record(cls, raw: Mapping[str, Any], mobile_id: str = "M") -> "TraceEntry":
        return cls(
            index=int(raw["index"]),
            position=tuple(raw.get("position", (math.nan,) * 3)),  # type: ignore[arg-type]
            true_distances={k: float(v) for k, v in (raw.get("true_distance_m") or {}).items()},
            estimates={
                node: RangingEstimate(mobile_id, node, float(e["distance_m"]), int(e["sample_count"]))
                for node, e in raw.get("estimates", {}).items()
            },
            outliers_removed={k: int(v) for k, v in raw.get("outliers_removed", {}).items()},
            samples={k: [float(x) for x in v] for k, v in raw["samples_m"].items()} if "samples_m" in raw else None,
        )


def run_rail_scenario(
    scenario: RailScenario,
    model: NoiseModel,
    seed: int,
    keep_samples: bool = False,
    max_plausible: float = DEFAULT_MAX_PLAUSIBLE,
) -> list[TraceEntry]:
    """Step the mobile node along the rail and range it against every fixed node.

    Each position gets its own child seed, so any single position can be
    regenerated independently of the others.
    """
    children = np.random.SeedSequence(seed).spawn(scenario.step_count + 1)
    trace = []
    for k, child in enumerate(children):
        rng = np.random.default_rng(child)
        pos = scenario.position(k)
        true_d: dict[str, float] = {}
        estimates: dict[str, RangingEstimate] = {}
        removed: dict[str, int] = {}
        raw: dict[str, list[float]] = {}
        for node in scenario.fixed_nodes:
            d = math.dist(pos, node.centre)  # type: ignore[arg-type]
            readings = sample_ranging(d, model, rng, size=scenario.samples_per_position)
            samples = [RangingSample(scenario.mobile_id, node.id, float(x), float(k)) for x in readings]
            kept = filter_outliers(samples, max_plausible)
            true_d[node.id] = d
            removed[node.id] = len(samples) - len(kept)
            if kept:
                estimates[node.id] = aggregate(kept)
            if keep_samples:
                raw[node.id] = [float(x) for x in readings]
        trace.append(TraceEntry(k, pos, true_d, estimates, removed, raw if keep_samples else None))
    return trace


def write_trace(trace: Iterable[TraceEntry], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in trace:
            fh.write(json.dumps(entry.to_record()) + "\n")


def read_trace(path: str | Path, mobile_id: str = "M") -> Iterator[TraceEntry]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield TraceEntry.from_record(json.loads(line), mobile_id)
