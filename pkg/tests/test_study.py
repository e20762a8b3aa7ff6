import json
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from semloc.model import Semantics, ValidationError, class_code
from semloc.study import (
    AgreementOptions,
    DistanceMatrix,
    Situation,
    StudyDataset,
    TranscribedRow,
    agreement_rate,
    agreement_table,
    algo_row,
    cross_check,
    data_path,
    ingest_study,
    nearest_reference,
    published_agreement,
)

EDGE_ROWS = {
    1: ["V", "NR", "VC", "VC", "NR", "NR"],
    2: ["NR", "NR", "NR", "V", "V", "VC"],
}


def test_matrix_conversion_and_lookup(study):
    m = study.matrices[0]
    assert m.semantics is Semantics.EDGE_TO_EDGE and m.room == "kitchen"
    assert m.distance("keys", "kettle") == pytest.approx(0.16)
    assert m.distance("kettle", "keys") == m.distance("keys", "kettle")
    with pytest.raises(KeyError):
        m.distance("keys", "toaster")


@pytest.mark.parametrize(
    "matrix, needle",
    [
        ([[None, 1], [2, None]], "asymmetric"),
        ([[0, 1], [1, None]], "diagonal"),
        ([[None, 1]], "not 2x2"),
    ],
)
def test_matrix_validation(matrix, needle):
    with pytest.raises(ValidationError, match=needle):
        DistanceMatrix.from_dict({"room": "r", "semantics": "edge", "objects": ["a", "b"], "matrix": matrix})


def test_kitchen_rows_from_matrix_only(study):
    for sit, expected in EDGE_ROWS.items():
        row = algo_row(study, sit, "edge")
        assert [class_code(row[r]) for r in study.situations[sit].references] == expected


def test_transcribed_rows_agree_with_matrix(study):
    assert cross_check(study) == []


def test_nearest_references(study):
    got = [nearest_reference(study, s, "edge") for s in sorted(study.situations)]
    assert got == ["bowl", "kettle", "wheelchair", "wheelchair", "bedside_lamp"]


def test_reconstructed_counts(study):
    assert study.response_counts(1, "bowl") == {"VC": 10, "N": 0, "V": 0, "NR": 0}
    assert study.response_counts(2, "kettle") == {"VC": 9, "N": 1, "V": 0, "NR": 0}
    total = sum(1 for _ in study.responses)
    assert total == 10 * sum(len(s.references) for s in study.situations.values())


def _write(tmp_path, name, doc):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def test_ingest_rejects_unreconstructible_percentages(tmp_path):
    base = {"situation": 1, "room": "r", "target": "t", "references": ["a"]}
    bad = _write(tmp_path, "r.json", {**base, "percentages": {"a": {"VC": 15, "N": 85}}})
    with pytest.raises(ValidationError, match="not reconstructible"):
        ingest_study([bad])
    short = _write(tmp_path, "s.json", {**base, "percentages": {"a": {"VC": 50, "N": 40}}})
    with pytest.raises(ValidationError, match="sum"):
        ingest_study([short])
    undeclared = _write(tmp_path, "u.json", {**base, "percentages": {"z": {"VC": 100}}})
    with pytest.raises(ValidationError, match="undeclared"):
        ingest_study([undeclared])


def test_ingest_explicit_answers(tmp_path):
    doc = {"situation": 1, "room": "r", "target": "t", "references": ["a"], "responses": {"a": ["VC"] * 5 + ["NR"] * 5}}
    rows = {"situation": 1, "rows": {"edge-to-edge": {"a": "VC"}}, "nearest": {"edge-to-edge": "a"}}
    ds = ingest_study([_write(tmp_path, "r.json", doc), _write(tmp_path, "a.json", rows)])
    assert agreement_rate(ds, AgreementOptions(include_nr=True)).to_dict()["matches"] == 5
    assert agreement_rate(ds).rate == 1.0
    doc["responses"]["a"] = ["XX"] * 10
    with pytest.raises(ValidationError, match="unknown code"):
        ingest_study([_write(tmp_path, "r.json", doc)])


def test_missing_semantics_is_an_error(tmp_path):
    doc = {"situation": 1, "room": "r", "target": "t", "references": ["a"], "percentages": {"a": {"NR": 100}}}
    ds = ingest_study([_write(tmp_path, "r.json", doc)])
    with pytest.raises(ValidationError):
        algo_row(ds, 1, "edge")
    with pytest.raises(ValidationError):
        agreement_rate(ds, situations=[])


def test_edge_agreement_table(study):
    table = {(o.semantics, o.nearest_only, o.include_nr): a for o, a in agreement_table(study)}
    E = Semantics.EDGE_TO_EDGE
    assert (table[(E, False, False)].matches, table[(E, False, False)].comparisons) == (69, 155)
    assert (table[(E, False, True)].matches, table[(E, False, True)].comparisons) == (176, 280)
    assert (table[(E, True, False)].matches, table[(E, True, False)].comparisons) == (45, 49)
    assert (table[(E, True, True)].matches, table[(E, True, True)].comparisons) == (45, 50)


def test_inter_centre_from_transcribed_rows(study):
    published = published_agreement()
    for opts, result in agreement_table(study):
        if opts.semantics is Semantics.INTER_CENTRE:
            assert (result.matches, result.comparisons) == published[(opts.semantics.value, opts.nearest_only, opts.include_nr)]


def test_r2_with_nr_denominator_is_participants_times_situations(study):
    result = agreement_rate(study, AgreementOptions(include_nr=True, nearest_only=True))
    assert result.comparisons == study.participants * len(study.situations)


def _shuffled_participants(ds: StudyDataset, seed: int) -> StudyDataset:
    rng = random.Random(seed)
    out = StudyDataset(ds.situations, ds.matrices, {}, ds.transcribed, ds.participants)
    # relabel participants independently within each (situation, reference) cell
    cells = {}
    for (s, p, r), code in ds.responses.items():
        cells.setdefault((s, r), []).append((p, code))
    for (s, r), answers in cells.items():
        ids = [p for p, _ in answers]
        rng.shuffle(ids)
        for new_p, (_, code) in zip(ids, answers):
            out.responses[(s, new_p, r)] = code
    return out


_baseline: dict[int, list] = {}


@given(st.integers(min_value=0, max_value=10**6))
def test_rate_invariant_under_participant_reordering(study, seed):
    shuffled = _shuffled_participants(study, seed)
    if id(study) not in _baseline:
        _baseline[id(study)] = agreement_table(study)
    for opts, result in _baseline[id(study)]:
        other = agreement_rate(shuffled, opts)
        assert (other.matches, other.comparisons) == (result.matches, result.comparisons)
        assert other.matches <= other.comparisons


codes = st.sampled_from(["VC", "N", "V", "NR"])


@st.composite
def cell_counts(draw):
    """How many of the 10 participants answer VC, N and V; the rest say NR."""
    vc = draw(st.integers(min_value=0, max_value=10))
    n = draw(st.integers(min_value=0, max_value=10 - vc))
    return vc, n, draw(st.integers(min_value=0, max_value=10 - vc - n))


@given(st.lists(cell_counts(), min_size=1, max_size=4), st.lists(codes, min_size=4, max_size=4), st.booleans(), st.booleans())
def test_numerator_bounded_by_denominator(counts, algo, include_nr, nearest_only):
    refs = [f"r{i}" for i in range(len(counts))]
    ds = StudyDataset()
    ds.situations[1] = Situation(1, "room", "t", tuple(refs))
    for ref, (vc, n, v) in zip(refs, counts):
        answers = ["VC"] * vc + ["N"] * n + ["V"] * v + ["NR"] * (10 - vc - n - v)
        for p, code in enumerate(answers, start=1):
            ds.responses[(1, p, ref)] = code
    ds.transcribed[(1, Semantics.EDGE_TO_EDGE)] = TranscribedRow(dict(zip(refs, algo)), refs[0])
    try:
        result = agreement_rate(ds, AgreementOptions(include_nr, nearest_only))
    except ValidationError:
        return  # nothing expressed in scope
    assert 0 <= result.matches <= result.comparisons
    if include_nr and nearest_only:
        assert result.comparisons == 10


def test_data_dir_files_exist():
    for name in ("kitchen_distances.json", "published_agreement.json", "kitchen_expected.json", "README.md"):
        assert data_path(name).exists()
