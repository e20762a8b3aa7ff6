"""Semantic position descriptions ("in the kitchen, near the kettle") from UWB ranging."""

from .config import EngineConfig, load_config
from .engine import DistanceCache, Engine, SpdService, TopicScheme
from .model import (
    SPD,
    ObjectDescriptor,
    ProximityClass,
    RangingEstimate,
    RangingSample,
    Role,
    Semantics,
    SodDatabase,
    SPDFragment,
    ValidationError,
    edge_to_edge,
    load_sod,
)
from .ranging import NoiseModel, RailScenario, aggregate, filter_outliers, run_rail_scenario, sample_ranging
from .spd import (
    AlignmentConfig,
    ProximityThresholds,
    RoomVoteConfig,
    TriangleInequalityError,
    alignment_original,
    alignment_revised,
    classify_proximity,
    combine,
    proximity_estimator,
    room_determination,
    triangle_angles,
)

__version__ = "0.1.0"

__all__ = [
    "SPD",
    "AlignmentConfig",
    "DistanceCache",
    "Engine",
    "EngineConfig",
    "NoiseModel",
    "ObjectDescriptor",
    "ProximityClass",
    "ProximityThresholds",
    "RailScenario",
    "RangingEstimate",
    "RangingSample",
    "Role",
    "RoomVoteConfig",
    "SPDFragment",
    "Semantics",
    "SodDatabase",
    "SpdService",
    "TopicScheme",
    "TriangleInequalityError",
    "ValidationError",
    "aggregate",
    "alignment_original",
    "alignment_revised",
    "classify_proximity",
    "combine",
    "edge_to_edge",
    "filter_outliers",
    "load_config",
    "load_sod",
    "proximity_estimator",
    "room_determination",
    "run_rail_scenario",
    "sample_ranging",
    "triangle_angles",
]
