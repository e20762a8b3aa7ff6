"""Engine configuration document (JSON) with compiled-in defaults."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .model import Semantics, ValidationError
from .spd import AlignmentConfig, ProximityThresholds, RoomVoteConfig, Templates, Variant

ALGORITHMS = ("room", "proximity", "alignment")


@dataclass(frozen=True)
class EngineConfig:
    thresholds: ProximityThresholds = field(default_factory=ProximityThresholds)
    alignment: AlignmentConfig = field(default_factory=AlignmentConfig)
    room_vote: RoomVoteConfig = field(default_factory=RoomVoteConfig)
    templates: Templates = field(default_factory=Templates)
    nearest_only: bool = True
    proximity_semantics: Semantics = Semantics.EDGE_TO_EDGE
    algorithms: tuple[str, ...] = ALGORITHMS
    staleness_s: float = 60.0
    debounce_s: float = 0.2

    def __post_init__(self) -> None:
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise ValidationError(f"unknown algorithms {sorted(unknown)}")
        if self.staleness_s <= 0:
            raise ValidationError("staleness_s must be > 0")
        if self.debounce_s < 0:
            raise ValidationError("debounce_s must be >= 0")
        object.__setattr__(self, "proximity_semantics", Semantics.parse(self.proximity_semantics))
        object.__setattr__(self, "algorithms", tuple(self.algorithms))

    def enabled(self, name: str) -> bool:
        return name in self.algorithms

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["alignment"]["variant"] = self.alignment.variant.value
        out["proximity_semantics"] = self.proximity_semantics.value
        out["algorithms"] = list(self.algorithms)
        return out

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "EngineConfig":
        known = {f.name for f in fields(cls)}
        extra = set(raw) - known
        if extra:
            raise ValidationError(f"unknown config keys {sorted(extra)}")
        kwargs: dict[str, Any] = {}
        nested = {
            "thresholds": ProximityThresholds,
            "alignment": AlignmentConfig,
            "room_vote": RoomVoteConfig,
            "templates": Templates,
        }
        try:
            for key, value in raw.items():
                if key in nested:
                    section = dict(value)
                    if key == "alignment" and "variant" in section:
                        section["variant"] = Variant(section["variant"])
                    kwargs[key] = nested[key](**section)
                elif key == "proximity_semantics":
                    kwargs[key] = Semantics.parse(value)
                elif key == "algorithms":
                    kwargs[key] = tuple(value)
                else:
                    kwargs[key] = value
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"invalid config: {exc}") from exc
        return cls(**kwargs)

    def merged(self, raw: Mapping[str, Any]) -> "EngineConfig":
        """Overlay a partial document on this config."""
        base = self.to_dict()
        for key, value in raw.items():
            if isinstance(value, Mapping) and isinstance(base.get(key), dict):
                base[key] = {**base[key], **value}
            else:
                base[key] = value
        return EngineConfig.from_dict(base)

    def with_(self, **changes: Any) -> "EngineConfig":
        return replace(self, **changes)


def load_config(path: str | Path | None) -> EngineConfig:
    """Read a (possibly partial) config file over the defaults."""
    if path is None:
        return EngineConfig()
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    return EngineConfig().merged(raw)
