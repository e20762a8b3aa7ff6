"""Alignment success rates on simulated rail traces, split by true geometry."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable

from .ranging import DEFAULT_MAX_PLAUSIBLE, TraceEntry
from .spd import AlignmentConfig, alignment_original, alignment_revised, triangle_angles
from .model import ValidationError

ABOVE = "above_threshold"
NEAR = "near_threshold"
SMALL = "very_small"
BUCKETS = (ABOVE, NEAR, SMALL)
VARIANTS = ("original", "revised")


def bucket_for(angle_b: float, angle_c: float, threshold: float, near_band: float = 0.1) -> str:
    """Place a true geometry in one of three disjoint buckets.

    above: some angle at or over the threshold (truth: not aligned);
    near: both below but the larger within ``near_band`` of the threshold;
    very small: everything else.
    """
    worst = max(angle_b, angle_c)
    if worst >= threshold:
        return ABOVE
    if worst >= threshold * (1.0 - near_band):
        return NEAR
    return SMALL


@dataclass
class VariantTally:
    correct: int = 0
    aligned: int = 0
    undecidable: int = 0

    def to_dict(self, samples: int) -> dict[str, Any]:
        return {
            "correct": self.correct,
            "aligned": self.aligned,
            "undecidable": self.undecidable,
            "success_rate": self.correct / samples if samples else None,
            "aligned_rate": self.aligned / samples if samples else None,
            "undecidable_rate": self.undecidable / samples if samples else None,
        }


@dataclass
class BucketTally:
    samples: int = 0
    variants: dict[str, VariantTally] = field(default_factory=lambda: {v: VariantTally() for v in VARIANTS})


@dataclass
class AlignmentReport:
    threshold: float
    buckets: dict[str, BucketTally]
    total: int
    removed: int

    def rate(self, bucket: str, variant: str, what: str = "success") -> float:
        b = self.buckets[bucket]
        if b.samples == 0:
            raise ValidationError(f"bucket {bucket!r} is empty")
        tally = b.variants[variant]
        value = {"success": tally.correct, "aligned": tally.aligned, "undecidable": tally.undecidable}[what]
        return value / b.samples

    def to_dict(self) -> dict[str, Any]:
        return {
            "threshold_deg": self.threshold,
            "total": self.total,
            "removed": self.removed,
            "buckets": {
                name: {"samples": b.samples, **{v: t.to_dict(b.samples) for v, t in b.variants.items()}}
                for name, b in self.buckets.items()
            },
        }


def _pairs(entry: TraceEntry, b: str, c: str) -> Iterable[tuple[float, float]]:
    if entry.samples is not None:
        return zip(entry.samples[b], entry.samples[c])
    if b in entry.estimates and c in entry.estimates:
        return [(entry.estimates[b].distance, entry.estimates[c].distance)]
    return []


def alignment_report(
    trace: Iterable[TraceEntry],
    d_bc: float,
    config: AlignmentConfig = AlignmentConfig(),
    b: str = "B",
    c: str = "C",
    max_plausible: float = DEFAULT_MAX_PLAUSIBLE,
    near_band: float = 0.1,
) -> AlignmentReport:
    """Run both alignment variants on every sample of ``trace``.

    Uses raw per-sample readings when the trace kept them, otherwise one
    aggregated estimate per position. Readings above ``max_plausible`` or
    at zero are removed before bucketing.
    """
    buckets = {name: BucketTally() for name in BUCKETS}
    total = removed = 0
    for entry in trace:
        if b not in entry.true_distances or c not in entry.true_distances:
            raise ValidationError(f"trace entry {entry.index} carries no ground truth for {b}/{c}")
        angle_b, angle_c = triangle_angles(d_bc, entry.true_distances[b], entry.true_distances[c])
        name = bucket_for(angle_b, angle_c, config.angle_threshold, near_band)
        truth = name != ABOVE
        tally = buckets[name]
        for d_bm, d_cm in _pairs(entry, b, c):
            total += 1
            if not (0 < d_bm <= max_plausible and 0 < d_cm <= max_plausible):
                removed += 1
                continue
            tally.samples += 1
            decisions = {
                "original": alignment_original(d_bc, d_bm, d_cm, config),
                "revised": alignment_revised(d_bc, d_bm, d_cm, config),
            }
            for variant, decision in decisions.items():
                t = tally.variants[variant]
                if decision is None:
                    t.undecidable += 1
                    continue
                t.aligned += decision
                t.correct += decision == truth
    return AlignmentReport(config.angle_threshold, buckets, total, removed)
