"""Room determination, proximity and alignment estimators, and the SPD combiner."""

from __future__ import annotations

import enum
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .model import (
    SPD,
    FragmentKind,
    ProximityClass,
    RangingEstimate,
    SodDatabase,
    SPDFragment,
    ValidationError,
)

# Relative slack for rounding when M sits exactly on segment BC.
COLLINEAR_RTOL = 1e-9


class TriangleInequalityError(ValueError):
    """Three distances cannot form a triangle."""


class Variant(str, enum.Enum):
    ORIGINAL = "original"
    REVISED = "revised"


@dataclass(frozen=True)
class ProximityThresholds:
    very_close_max: float = 0.3
    near_max: float = 0.6
    vicinity_max: float = 1.2

    def __post_init__(self) -> None:
        if not (0 < self.very_close_max < self.near_max < self.vicinity_max):
            raise ValidationError("thresholds must satisfy 0 < very_close < near < vicinity")


@dataclass(frozen=True)
class AlignmentConfig:
    angle_threshold: float = 30.0
    variant: Variant = Variant.REVISED

    def __post_init__(self) -> None:
        if not (0 < self.angle_threshold < 90):
            raise ValidationError("angle threshold must lie in (0, 90) degrees")
        object.__setattr__(self, "variant", Variant(self.variant))


@dataclass(frozen=True)
class RoomVoteConfig:
    k: int = 3
    max_neighbour_range: float = 5.0

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValidationError("k must be >= 1")
        if not self.max_neighbour_range > 0:
            raise ValidationError("max_neighbour_range must be > 0")


@dataclass(frozen=True)
class Templates:
    """Phrase templates; ``<label>``, ``<labelA>``, ``<labelB>``, ``<room>`` are substituted."""

    room: str = "in the <room>"
    very_close: str = "very close to the <label>"
    near: str = "near the <label>"
    in_vicinity: str = "in the vicinity of the <label>"
    between: str = "between the <labelA> and the <labelB>"

    def proximity(self, cls: ProximityClass, label: str) -> str:
        template = {
            ProximityClass.VERY_CLOSE: self.very_close,
            ProximityClass.NEAR: self.near,
            ProximityClass.IN_VICINITY: self.in_vicinity,
        }[cls]
        return template.replace("<label>", label)


DEFAULT_TEMPLATES = Templates()


def classify_proximity(distance: float, thresholds: ProximityThresholds = ProximityThresholds()) -> ProximityClass | None:
    """Map a distance in metres onto the half-open threshold bands; ``None`` beyond the last."""
    if distance < 0 or math.isnan(distance):
        raise ValidationError(f"negative distance {distance}")
    if distance < thresholds.very_close_max:
        return ProximityClass.VERY_CLOSE
    if distance < thresholds.near_max:
        return ProximityClass.NEAR
    if distance < thresholds.vicinity_max:
        return ProximityClass.IN_VICINITY
    return None


def proximity_estimator(
    target: str,
    references: Sequence[tuple[str, RangingEstimate]],
    sod: SodDatabase,
    thresholds: ProximityThresholds = ProximityThresholds(),
    nearest_only: bool = False,
    templates: Templates = DEFAULT_TEMPLATES,
) -> list[SPDFragment]:
    """Proximity fragments for ``target`` against each reference object.

    With ``nearest_only`` only the reference at minimal distance is kept,
    and it yields a fragment only if it falls inside a proximity band.
    Distances are used as given; convert semantics before calling.
    """
    if not references:
        raise ValidationError("proximity_estimator needs at least one reference")
    if target not in sod:
        raise ValidationError(f"unknown target {target!r}")
    for ref_id, est in references:
        if ref_id not in sod:
            raise ValidationError(f"unknown reference {ref_id!r}")
        if est.pair != frozenset((target, ref_id)):
            raise ValidationError(f"estimate {est.a}-{est.b} does not pair {target!r} with {ref_id!r}")

    candidates = list(references)
    if nearest_only:
        # min() keeps the first of equal distances
        candidates = [min(candidates, key=lambda item: item[1].distance)]

    fragments = []
    for ref_id, est in candidates:
        cls = classify_proximity(est.distance, thresholds)
        if cls is None:
            continue
        fragments.append(
            SPDFragment(
                kind=FragmentKind.PROXIMITY,
                subject=target,
                references=(ref_id,),
                text=templates.proximity(cls, sod[ref_id].label),
                detail=cls,
                distance=est.distance,
            )
        )
    return fragments


def room_determination(
    target: str,
    neighbours: Sequence[tuple[str, float]],
    sod: SodDatabase,
    config: RoomVoteConfig = RoomVoteConfig(),
    templates: Templates = DEFAULT_TEMPLATES,
) -> SPDFragment | None:
    """Majority vote over the rooms of the k closest in-range neighbours.

    Ties go to the room whose voters have the smallest summed distance,
    then to the lexicographically smallest room id.
    """
    for obj_id, d in neighbours:
        if obj_id not in sod:
            raise ValidationError(f"neighbour {obj_id!r} missing from SOD")
        if d < 0:
            raise ValidationError(f"negative distance to {obj_id!r}")

    in_range = [(obj_id, d) for obj_id, d in neighbours if d <= config.max_neighbour_range]
    if not in_range:
        return None
    closest = sorted(in_range, key=lambda item: item[1])[: config.k]

    votes: dict[str, int] = defaultdict(int)
    spread: dict[str, float] = defaultdict(float)
    for obj_id, d in closest:
        room = sod[obj_id].room
        votes[room] += 1
        spread[room] += d
    room = min(votes, key=lambda r: (-votes[r], spread[r], r))
    return SPDFragment(
        kind=FragmentKind.ROOM,
        subject=target,
        references=(room,),
        text=templates.room.replace("<room>", room),
    )


def triangle_angles(d_bc: float, d_bm: float, d_cm: float) -> tuple[float, float]:
    """Interior angles (degrees) at B and C of triangle BMC, by the law of cosines.

    Raises TriangleInequalityError when the sides cannot close a triangle.
    Cosines within ``COLLINEAR_RTOL`` of +-1 are treated as exactly degenerate.
    """
    if d_bc <= 0 or d_bm <= 0 or d_cm <= 0:
        raise ValidationError("triangle sides must be positive")
    cos_b = (d_bc * d_bc + d_bm * d_bm - d_cm * d_cm) / (2 * d_bc * d_bm)
    cos_c = (d_bc * d_bc + d_cm * d_cm - d_bm * d_bm) / (2 * d_bc * d_cm)
    limit = 1.0 + COLLINEAR_RTOL
    if abs(cos_b) > limit or abs(cos_c) > limit:
        raise TriangleInequalityError(f"sides ({d_bc}, {d_bm}, {d_cm}) violate the triangle inequality")
    cos_b = max(-1.0, min(1.0, cos_b))
    cos_c = max(-1.0, min(1.0, cos_c))
    return math.degrees(math.acos(cos_b)), math.degrees(math.acos(cos_c))


def _check_sides(d_bc: float, d_bm: float, d_cm: float) -> None:
    if d_bc <= 0 or d_bm <= 0 or d_cm <= 0:
        raise ValidationError("alignment distances must be positive")


def alignment_original(
    d_bc: float, d_bm: float, d_cm: float, config: AlignmentConfig = AlignmentConfig()
) -> bool | None:
    """Angle test; ``None`` when the distances do not form a triangle."""
    _check_sides(d_bc, d_bm, d_cm)
    try:
        angle_b, angle_c = triangle_angles(d_bc, d_bm, d_cm)
    except TriangleInequalityError:
        return None
    return angle_b < config.angle_threshold and angle_c < config.angle_threshold


def alignment_revised(
    d_bc: float, d_bm: float, d_cm: float, config: AlignmentConfig = AlignmentConfig()
) -> bool:
    """Angle test preceded by a between-B-and-C guard and a short-sum rule.

    A summed distance at or below ``d_bc`` is what ranging underestimation
    produces for a node on the segment, so it counts as aligned.
    """
    _check_sides(d_bc, d_bm, d_cm)
    if not (d_bm < d_bc and d_cm < d_bc):
        return False
    if d_bm + d_cm <= d_bc * (1.0 + COLLINEAR_RTOL):
        return True
    result = alignment_original(d_bc, d_bm, d_cm, config)
    assert result is not None  # sum > d_bc and both sides < d_bc form a triangle
    return result


@dataclass(frozen=True)
class AlignmentInput:
    """Distances from the target to two references, plus optionally between them."""

    ref_a: str
    ref_b: str
    d_a: float
    d_b: float
    d_ab: float | None = None


def alignment_estimator(
    target: str,
    pairs: Iterable[AlignmentInput],
    sod: SodDatabase,
    config: AlignmentConfig = AlignmentConfig(),
    templates: Templates = DEFAULT_TEMPLATES,
) -> list[SPDFragment]:
    fragments = []
    for p in pairs:
        d_ab = sod.centre_distance(p.ref_a, p.ref_b)
        if d_ab is None:
            d_ab = p.d_ab
        if d_ab is None:
            raise ValidationError(f"no position or measurement for {p.ref_a!r}-{p.ref_b!r}")
        if config.variant is Variant.ORIGINAL:
            aligned = alignment_original(d_ab, p.d_a, p.d_b, config) is True
        else:
            aligned = alignment_revised(d_ab, p.d_a, p.d_b, config)
        if not aligned:
            continue
        text = templates.between.replace("<labelA>", sod[p.ref_a].label).replace("<labelB>", sod[p.ref_b].label)
        fragments.append(
            SPDFragment(kind=FragmentKind.ALIGNMENT, subject=target, references=(p.ref_a, p.ref_b), text=text)
        )
    return fragments


_KIND_ORDER = {FragmentKind.ROOM: 0, FragmentKind.PROXIMITY: 1, FragmentKind.ALIGNMENT: 2}


def combine(fragments: Iterable[SPDFragment] | Mapping[FragmentKind, Iterable[SPDFragment]], subject: str | None = None) -> SPD:
    """Order fragments room, proximity (closest first), alignment; exact duplicates are dropped."""
    if isinstance(fragments, Mapping):
        flat = [f for group in fragments.values() for f in group]
    else:
        flat = list(fragments)
    subjects = {f.subject for f in flat}
    if subject is not None:
        subjects.add(subject)
    if len(subjects) > 1:
        raise ValidationError(f"fragments describe several subjects: {sorted(subjects)}")
    if not subjects:
        raise ValidationError("combine needs a subject when there are no fragments")

    def key(f: SPDFragment) -> tuple[int, float, str, tuple[str, ...]]:
        d = f.distance if f.kind is FragmentKind.PROXIMITY and f.distance is not None else 0.0
        return _KIND_ORDER[f.kind], d, f.text, f.references

    # ties break on content, so the result depends only on the set of fragments
    ordered = tuple(sorted(dict.fromkeys(flat), key=key))
    return SPD(subject=subjects.pop(), fragments=ordered)

