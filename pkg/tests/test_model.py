import json

import jsonschema
import pytest
from hypothesis import given
from hypothesis import strategies as st

from semloc.model import (
    SPD,
    FragmentKind,
    ObjectDescriptor,
    ProximityClass,
    RangingEstimate,
    RangingSample,
    Role,
    Semantics,
    SodDatabase,
    SPDFragment,
    ValidationError,
    class_code,
    edge_to_edge,
    load_sod,
)
from semloc.study import data_path

nonneg = st.floats(min_value=0, max_value=50, allow_nan=False)


def test_role_and_semantics_aliases():
    assert Role.parse("fixed") is Role.FIXED
    assert Role.parse("mobile") is Role.MOBILE
    assert Semantics.parse("edge") is Semantics.EDGE_TO_EDGE
    assert Semantics.parse("inter-centre") is Semantics.INTER_CENTRE


def test_proximity_class_order_and_codes():
    assert ProximityClass.VERY_CLOSE > ProximityClass.NEAR > ProximityClass.IN_VICINITY
    for cls in ProximityClass:
        assert ProximityClass.from_code(cls.code) is cls
    assert ProximityClass.from_code("NR") is None
    assert class_code(None) == "NR"


def test_fixed_reference_needs_centre():
    with pytest.raises(ValidationError):
        ObjectDescriptor("tv", "television", "livingroom", Role.FIXED)
    tv = ObjectDescriptor("tv", "television", "livingroom", Role.FIXED, (1.0, 0.2, 0.8), 0.4)
    assert tv.is_fixed


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(id="x", label="x", room="", role=Role.MOBILE),
        dict(id="x", label="x", room="r", role=Role.MOBILE, bounding_radius=-0.1),
        dict(id="x", label="a, b", room="r", role=Role.MOBILE),
        dict(id="", label="x", room="r", role=Role.MOBILE),
    ],
)
def test_descriptor_validation(kwargs):
    with pytest.raises(ValidationError):
        ObjectDescriptor(**kwargs)


def test_samples_and_estimates_validate():
    with pytest.raises(ValidationError):
        RangingSample("a", "a", 1.0)
    with pytest.raises(ValidationError):
        RangingSample("a", "b", float("inf"))
    with pytest.raises(ValidationError):
        RangingEstimate("a", "b", 1.0, sample_count=0)
    est = RangingEstimate("a", "b", 1.0)
    assert est.pair == frozenset("ab")
    assert est.other("a") == "b"
    with pytest.raises(KeyError):
        est.other("c")


def test_fragment_reference_count():
    with pytest.raises(ValidationError):
        SPDFragment(FragmentKind.ALIGNMENT, "m", ("a",), "between the a and the b")
    with pytest.raises(ValidationError):
        SPDFragment(FragmentKind.PROXIMITY, "m", ("a",), "near the a")
    SPDFragment(FragmentKind.PROXIMITY, "m", ("a",), "near the a", ProximityClass.NEAR, 0.4)


def test_spd_rendering():
    room = SPDFragment(FragmentKind.ROOM, "k", ("kitchen",), "in the kitchen")
    near = SPDFragment(FragmentKind.PROXIMITY, "k", ("kettle",), "near the kettle", ProximityClass.NEAR, 0.5)
    spd = SPD("k", (room, near))
    assert spd.rendered == "in the kitchen, near the kettle"
    assert spd.sentence == "In the kitchen, near the kettle"
    assert SPD("k").rendered == "" and not SPD("k")


def test_edge_to_edge_examples():
    assert edge_to_edge(1.0, 0.2, 0.3) == pytest.approx(0.5)
    assert edge_to_edge(0.3, 0.2, 0.3) == 0.0
    with pytest.raises(ValidationError):
        edge_to_edge(-1, 0, 0)


@given(nonneg, nonneg, nonneg, nonneg, nonneg)
def test_edge_to_edge_bounded_and_monotone(d, extra, ra, rb, dr):
    assert edge_to_edge(d, ra, rb) <= d
    assert edge_to_edge(d, ra, rb) <= edge_to_edge(d + extra, ra, rb)
    assert edge_to_edge(d, ra + dr, rb) <= edge_to_edge(d, ra, rb)
    assert edge_to_edge(d, ra, rb + dr) <= edge_to_edge(d, ra, rb)


words = st.text(alphabet="abcdefghijklmnopqrstuvwxyz ", min_size=1, max_size=12).filter(lambda s: s.strip())


@given(st.lists(words, min_size=1, max_size=6))
def test_rendered_round_trips(texts):
    frags = tuple(SPDFragment(FragmentKind.ROOM, "m", ("r",), t) for t in texts)
    assert SPD("m", frags).rendered.split(", ") == list(texts)


def test_load_sod_variants(tmp_path):
    doc = [
        {"id": "tv", "label": "television", "room": "livingroom", "role": "fixed", "center": [0, 0, 1], "radius": 0.4},
        {"id": "keys", "label": "keys", "room": "livingroom", "role": "mobile", "boundingRadius": 0.03},
    ]
    for source in (doc, {"objects": doc}, json.dumps(doc)):
        db = load_sod(source)
        assert db["tv"].bounding_radius == 0.4 and db["tv"].centre == (0.0, 0.0, 1.0)
    path = tmp_path / "sod.json"
    path.write_text(json.dumps(doc))
    db = load_sod(path)
    assert [o.id for o in db.fixed()] == ["tv"] and [o.id for o in db.mobiles()] == ["keys"]
    assert db.centre_distance("tv", "keys") is None


@pytest.mark.parametrize(
    "doc, needle",
    [
        ([{"id": "a", "room": "r"}, {"id": "a", "room": "r"}], "duplicate object id 'a'"),
        ([{"id": "a"}], "'a': missing room"),
        ([{"id": "a", "room": "r", "bounding_radius": -1}], "'a': negative bounding radius"),
        ([{"id": "a", "room": "r", "role": "boss"}], "unknown role"),
        ({"nothing": []}, "list of objects"),
    ],
)
def test_load_sod_errors_name_the_object(doc, needle):
    with pytest.raises(ValidationError, match=needle):
        load_sod(doc)


def test_shipped_sods_match_schema():
    schema = json.loads(data_path("sod.schema.json").read_text())
    for name in ("kitchen_sod.json", "mib_sod.json"):
        jsonschema.validate(json.loads(data_path(name).read_text()), schema)
        assert len(load_sod(data_path(name))) > 0


def test_sod_database_is_immutable_mapping(kitchen_sod):
    assert isinstance(kitchen_sod, SodDatabase)
    with pytest.raises(KeyError):
        kitchen_sod["missing"]
    with pytest.raises(AttributeError):
        kitchen_sod._objects = {}  # type: ignore[misc]
