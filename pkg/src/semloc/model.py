"""Shared domain types and the Semantic Object Description (SOD) database."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Sequence

FRAGMENT_SEPARATOR = ", "


class ValidationError(ValueError):
    """Input document or value violates a domain invariant."""


class Role(str, enum.Enum):
    FIXED = "fixed-reference"
    MOBILE = "mobile"

    @classmethod
    def parse(cls, value: str) -> "Role":
        aliases = {"fixed": cls.FIXED, "reference": cls.FIXED, "anchor": cls.FIXED}
        if value in aliases:
            return aliases[value]
        return cls(value)


class Semantics(str, enum.Enum):
    INTER_CENTRE = "inter-centre"
    EDGE_TO_EDGE = "edge-to-edge"

    @classmethod
    def parse(cls, value: "str | Semantics") -> "Semantics":
        if isinstance(value, Semantics):
            return value
        aliases = {"edge": cls.EDGE_TO_EDGE, "inter": cls.INTER_CENTRE, "centre": cls.INTER_CENTRE}
        if value in aliases:
            return aliases[value]
        return cls(value)


class ProximityClass(enum.IntEnum):
    """Qualitative distance relation; larger value means closer."""

    IN_VICINITY = 1
    NEAR = 2
    VERY_CLOSE = 3

    @property
    def code(self) -> str:
        return _CODES[self]

    @classmethod
    def from_code(cls, code: str) -> "ProximityClass | None":
        """Parse ``VC``/``N``/``V``; ``NR`` maps to ``None``."""
        if code == NO_RESPONSE:
            return None
        for member, c in _CODES.items():
            if c == code:
                return member
        raise ValidationError(f"unknown proximity code {code!r}")


NO_RESPONSE = "NR"
_CODES = {
    ProximityClass.VERY_CLOSE: "VC",
    ProximityClass.NEAR: "N",
    ProximityClass.IN_VICINITY: "V",
}


def class_code(cls: ProximityClass | None) -> str:
    return NO_RESPONSE if cls is None else cls.code


@dataclass(frozen=True)
class ObjectDescriptor:
    id: str
    label: str
    room: str
    role: Role
    centre: tuple[float, float, float] | None = None
    bounding_radius: float = 0.0

    def __post_init__(self) -> None:
        if not self.id:
            raise ValidationError("object without id")
        if not self.room:
            raise ValidationError(f"object {self.id!r}: missing room")
        if not self.label or FRAGMENT_SEPARATOR in self.label:
            raise ValidationError(f"object {self.id!r}: label must be non-empty and free of {FRAGMENT_SEPARATOR!r}")
        if not (self.bounding_radius >= 0 and math.isfinite(self.bounding_radius)):
            raise ValidationError(f"object {self.id!r}: negative bounding radius {self.bounding_radius}")
        if self.role is Role.FIXED and self.centre is None:
            raise ValidationError(f"object {self.id!r}: fixed reference without centre")
        if self.centre is not None and len(self.centre) != 3:
            raise ValidationError(f"object {self.id!r}: centre must have 3 coordinates")

    @property
    def is_fixed(self) -> bool:
        return self.role is Role.FIXED

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "label": self.label,
            "room": self.room,
            "role": self.role.value,
            "centre": list(self.centre) if self.centre is not None else None,
            "bounding_radius": self.bounding_radius,
        }


@dataclass(frozen=True)
class RangingSample:
    a: str
    b: str
    distance: float
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        if self.a == self.b:
            raise ValidationError(f"ranging sample pairs {self.a!r} with itself")
        # zero is reachable through clamping of biased readings
        if not (math.isfinite(self.distance) and self.distance >= 0):
            raise ValidationError(f"invalid distance {self.distance!r} for {self.a}-{self.b}")

    @property
    def pair(self) -> frozenset[str]:
        return frozenset((self.a, self.b))


@dataclass(frozen=True)
class RangingEstimate:
    a: str
    b: str
    distance: float
    sample_count: int = 1
    semantics: Semantics = Semantics.INTER_CENTRE

    def __post_init__(self) -> None:
        if self.a == self.b:
            raise ValidationError(f"ranging estimate pairs {self.a!r} with itself")
        if self.sample_count < 1:
            raise ValidationError("sample_count must be >= 1")
        if not (math.isfinite(self.distance) and self.distance >= 0):
            raise ValidationError(f"invalid distance {self.distance!r} for {self.a}-{self.b}")

    @property
    def pair(self) -> frozenset[str]:
        return frozenset((self.a, self.b))

    def other(self, obj_id: str) -> str:
        if obj_id == self.a:
            return self.b
        if obj_id == self.b:
            return self.a
        raise KeyError(obj_id)


class FragmentKind(str, enum.Enum):
    ROOM = "room"
    PROXIMITY = "proximity"
    ALIGNMENT = "alignment"


_REFERENCE_COUNT = {FragmentKind.ROOM: 1, FragmentKind.PROXIMITY: 1, FragmentKind.ALIGNMENT: 2}


@dataclass(frozen=True)
class SPDFragment:
    """One algorithm's assertion about where ``subject`` is.

    For room fragments ``references`` holds the room identifier.
    ``distance`` orders proximity fragments inside the combined description.
    """

    kind: FragmentKind
    subject: str
    references: tuple[str, ...]
    text: str
    detail: ProximityClass | None = None
    distance: float | None = None

    def __post_init__(self) -> None:
        if len(self.references) != _REFERENCE_COUNT[self.kind]:
            raise ValidationError(f"{self.kind.value} fragment needs {_REFERENCE_COUNT[self.kind]} reference(s)")
        if not self.text or FRAGMENT_SEPARATOR in self.text:
            raise ValidationError(f"fragment text {self.text!r} is empty or contains {FRAGMENT_SEPARATOR!r}")
        if (self.kind is FragmentKind.PROXIMITY) != (self.detail is not None):
            raise ValidationError("proximity fragments carry a class, other kinds do not")

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "subject": self.subject,
            "references": list(self.references),
            "detail": class_code(self.detail) if self.detail is not None else None,
            "text": self.text,
        }


@dataclass(frozen=True)
class SPD:
    subject: str
    fragments: tuple[SPDFragment, ...] = ()

    @property
    def rendered(self) -> str:
        return FRAGMENT_SEPARATOR.join(f.text for f in self.fragments)

    @property
    def sentence(self) -> str:
        """Rendered description with a capitalised first letter."""
        r = self.rendered
        return r[:1].upper() + r[1:]

    def __bool__(self) -> bool:
        return bool(self.fragments)

    def to_dict(self) -> dict[str, Any]:
        return {
            "subject": self.subject,
            "rendered": self.rendered,
            "fragments": [f.to_dict() for f in self.fragments],
        }


def edge_to_edge(inter_centre: float, radius_a: float, radius_b: float) -> float:
    """Convert a centre-to-centre distance to a perimeter-to-perimeter one.

    Objects are modelled as spheres; overlapping spheres give 0.
    """
    if inter_centre < 0 or radius_a < 0 or radius_b < 0:
        raise ValidationError("edge_to_edge expects non-negative inputs")
    return max(0.0, inter_centre - radius_a - radius_b)


@dataclass(frozen=True)
class SodDatabase:
    """Immutable id -> ObjectDescriptor mapping."""

    _objects: Mapping[str, ObjectDescriptor] = field(default_factory=dict)

    @classmethod
    def from_objects(cls, objects: Iterable[ObjectDescriptor]) -> "SodDatabase":
        table: dict[str, ObjectDescriptor] = {}
        for obj in objects:
            if obj.id in table:
                raise ValidationError(f"duplicate object id {obj.id!r}")
            table[obj.id] = obj
        return cls(table)

    def __len__(self) -> int:
        return len(self._objects)

    def __contains__(self, obj_id: object) -> bool:
        return obj_id in self._objects

    def __iter__(self) -> Iterator[ObjectDescriptor]:
        return iter(self._objects.values())

    def __getitem__(self, obj_id: str) -> ObjectDescriptor:
        try:
            return self._objects[obj_id]
        except KeyError:
            raise KeyError(f"unknown object id {obj_id!r}") from None

    def get(self, obj_id: str) -> ObjectDescriptor | None:
        return self._objects.get(obj_id)

    @property
    def ids(self) -> list[str]:
        return list(self._objects)

    def fixed(self) -> list[ObjectDescriptor]:
        return [o for o in self if o.is_fixed]

    def mobiles(self) -> list[ObjectDescriptor]:
        return [o for o in self if not o.is_fixed]

    def centre_distance(self, a: str, b: str) -> float | None:
        ca, cb = self[a].centre, self[b].centre
        if ca is None or cb is None:
            return None
        return math.dist(ca, cb)

    def to_list(self) -> list[dict[str, Any]]:
        return [o.to_dict() for o in self]


def _descriptor_from_dict(raw: Mapping[str, Any], index: int) -> ObjectDescriptor:
    if not isinstance(raw, Mapping):
        raise ValidationError(f"object #{index} is not a mapping")
    obj_id = raw.get("id")
    if not isinstance(obj_id, str) or not obj_id:
        raise ValidationError(f"object #{index}: missing id")
    room = raw.get("room")
    if not isinstance(room, str) or not room:
        raise ValidationError(f"object {obj_id!r}: missing room")
    radius = raw.get("bounding_radius", raw.get("boundingRadius", raw.get("radius", 0.0)))
    centre = raw.get("centre", raw.get("center"))
    try:
        role = Role.parse(raw.get("role", "mobile"))
    except ValueError:
        raise ValidationError(f"object {obj_id!r}: unknown role {raw.get('role')!r}") from None
    try:
        radius = float(radius)
        centre_t = tuple(float(c) for c in centre) if centre is not None else None
    except (TypeError, ValueError):
        raise ValidationError(f"object {obj_id!r}: non-numeric geometry") from None
    return ObjectDescriptor(
        id=obj_id,
        label=str(raw.get("label", obj_id)),
        room=room,
        role=role,
        centre=centre_t,  # type: ignore[arg-type]
        bounding_radius=radius,
    )


def load_sod(source: str | Path | Sequence[Any] | Mapping[str, Any]) -> SodDatabase:
    """Build an SOD database from a JSON file path, JSON text or parsed document.

    The document is a list of objects, or a mapping with an ``objects`` list.
    """
    doc: Any = source
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith(("[", "{"))):
        doc = json.loads(Path(source).read_text(encoding="utf-8"))
    elif isinstance(source, str):
        doc = json.loads(source)
    if isinstance(doc, Mapping):
        doc = doc.get("objects")
    if not isinstance(doc, list):
        raise ValidationError("SOD document must be a list of objects")
    return SodDatabase.from_objects(_descriptor_from_dict(raw, i) for i, raw in enumerate(doc))
