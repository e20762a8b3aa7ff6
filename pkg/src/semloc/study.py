"""Human-study comparison: algorithm rows vs participant responses."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping

from .model import NO_RESPONSE, ProximityClass, Semantics, ValidationError, class_code
from .spd import ProximityThresholds, classify_proximity

CODES = ("VC", "N", "V", NO_RESPONSE)
PARTICIPANTS = 10


@dataclass(frozen=True)
class Situation:
    id: int
    room: str
    target: str
    references: tuple[str, ...]


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric pairwise distances for one room, stored in metres."""

    room: str
    semantics: Semantics
    objects: tuple[str, ...]
    values: Mapping[frozenset[str], float]

    def distance(self, a: str, b: str) -> float:
        try:
            return self.values[frozenset((a, b))]
        except KeyError:
            raise KeyError(f"no {self.semantics.value} distance for {a}-{b} in {self.room}") from None

    def covers(self, ids: Iterable[str]) -> bool:
        return set(ids) <= set(self.objects)

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "DistanceMatrix":
        objects = tuple(raw["objects"])
        rows = raw["matrix"]
        scale = {"cm": 0.01, "m": 1.0}[raw.get("unit", "cm")]
        if len(rows) != len(objects) or any(len(r) != len(objects) for r in rows):
            raise ValidationError(f"{raw.get('room')}: matrix is not {len(objects)}x{len(objects)}")
        values: dict[frozenset[str], float] = {}
        for i, a in enumerate(objects):
            if rows[i][i] is not None:
                raise ValidationError(f"{raw.get('room')}: diagonal entry for {a!r} must be empty")
            for j in range(i + 1, len(objects)):
                upper, lower = rows[i][j], rows[j][i]
                if upper != lower:
                    raise ValidationError(f"{raw.get('room')}: asymmetric entry {a}-{objects[j]}: {upper} vs {lower}")
                if upper is not None:
                    values[frozenset((a, objects[j]))] = float(upper) * scale
        return cls(raw["room"], Semantics.parse(raw["semantics"]), objects, values)


@dataclass(frozen=True)
class TranscribedRow:
    codes: Mapping[str, str]
    nearest: str | None = None


@dataclass
class StudyDataset:
    situations: dict[int, Situation] = field(default_factory=dict)
    matrices: list[DistanceMatrix] = field(default_factory=list)
    # (situation, participant, reference) -> VC | N | V | NR
    responses: dict[tuple[int, int, str], str] = field(default_factory=dict)
    transcribed: dict[tuple[int, Semantics], TranscribedRow] = field(default_factory=dict)
    participants: int = PARTICIPANTS

    def matrix_for(self, situation: Situation, semantics: Semantics) -> DistanceMatrix | None:
        for m in self.matrices:
            if m.semantics is semantics and m.room == situation.room and m.covers((situation.target, *situation.references)):
                return m
        return None

    def response_counts(self, situation: int, reference: str) -> dict[str, int]:
        counts = dict.fromkeys(CODES, 0)
        for (s, _, ref), code in self.responses.items():
            if s == situation and ref == reference:
                counts[code] += 1
        return counts


def _expand_percentages(situation: Situation, table: Mapping[str, Mapping[str, float]], participants: int) -> dict[tuple[int, int, str], str]:
    """Turn per-reference percentage columns into per-participant answers.

    Participants are assigned in code order VC, N, V, NR; every metric
    computed downstream depends only on the per-cell counts.
    """
    out = {}
    for ref, cells in table.items():
        if ref not in situation.references:
            raise ValidationError(f"situation {situation.id}: response for undeclared reference {ref!r}")
        participant = 0
        for code in CODES:
            pct = cells.get(code, 0)
            count, rest = divmod(pct * participants, 100)
            if rest:
                raise ValidationError(
                    f"situation {situation.id}, {ref}: {pct}% is not reconstructible from {participants} participants"
                )
            for _ in range(int(count)):
                participant += 1
                out[(situation.id, participant, ref)] = code
        if participant != participants:
            raise ValidationError(f"situation {situation.id}, {ref}: percentages sum to {participant * 100 // participants}%")
    return out


def _load_responses(raw: Mapping[str, Any], dataset: StudyDataset) -> None:
    sit = Situation(int(raw["situation"]), raw["room"], raw["target"], tuple(raw["references"]))
    if sit.id in dataset.situations:
        raise ValidationError(f"situation {sit.id} defined twice")
    dataset.situations[sit.id] = sit
    if "responses" in raw:
        for ref, answers in raw["responses"].items():
            if ref not in sit.references:
                raise ValidationError(f"situation {sit.id}: response for undeclared reference {ref!r}")
            if len(answers) != dataset.participants:
                raise ValidationError(f"situation {sit.id}, {ref}: expected {dataset.participants} answers")
            for p, code in enumerate(answers, start=1):
                if code not in CODES:
                    raise ValidationError(f"situation {sit.id}, {ref}: unknown code {code!r}")
                dataset.responses[(sit.id, p, ref)] = code
    else:
        dataset.responses.update(_expand_percentages(sit, raw.get("percentages") or {}, dataset.participants))


def _load_rows(raw: Mapping[str, Any], dataset: StudyDataset) -> None:
    sit_id = int(raw["situation"])
    nearest = raw.get("nearest", {})
    for sem_name, codes in raw["rows"].items():
        sem = Semantics.parse(sem_name)
        bad = set(codes.values()) - set(CODES)
        if bad:
            raise ValidationError(f"situation {sit_id}: unknown codes {sorted(bad)}")
        dataset.transcribed[(sit_id, sem)] = TranscribedRow(dict(codes), nearest.get(sem.value))


def ingest_study(files: Iterable[str | Path]) -> StudyDataset:
    """Load distance matrices, response tables and transcribed algorithm rows.

    Each file's role is recognised from its keys (``matrix``, ``rows``,
    ``percentages``/``responses``).
    """
    dataset = StudyDataset()
    docs = []
    for path in files:
        try:
            docs.append((path, json.loads(Path(path).read_text(encoding="utf-8"))))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: {exc}") from exc
    for path, raw in docs:
        if "matrix" in raw:
            dataset.matrices.append(DistanceMatrix.from_dict(raw))
        elif "situation" in raw and "rows" not in raw:
            _load_responses(raw, dataset)
    for path, raw in docs:
        if "rows" in raw:
            _load_rows(raw, dataset)
    for (sit_id, _), row in dataset.transcribed.items():
        sit = dataset.situations.get(sit_id)
        if sit is not None and set(row.codes) != set(sit.references):
            raise ValidationError(f"situation {sit_id}: transcribed row references differ from the declared ones")
    return dataset


def data_path(name: str = "") -> Path:
    return Path(str(resources.files("semloc") / "data")) / name


def default_study() -> StudyDataset:
    d = data_path()
    files = sorted(d.glob("kitchen_distances.json")) + sorted(d.glob("responses_s*.json")) + sorted(d.glob("algo_rows_s*.json"))
    return ingest_study(files)


def _situation(dataset: StudyDataset, situation: int | Situation) -> Situation:
    if isinstance(situation, Situation):
        return situation
    try:
        return dataset.situations[situation]
    except KeyError:
        raise ValidationError(f"unknown situation {situation}") from None


def algo_row(
    dataset: StudyDataset,
    situation: int | Situation,
    semantics: Semantics | str,
    thresholds: ProximityThresholds = ProximityThresholds(),
) -> dict[str, ProximityClass | None]:
    """Algorithm output per reference; computed from a matrix when one is available."""
    sit = _situation(dataset, situation)
    sem = Semantics.parse(semantics)
    matrix = dataset.matrix_for(sit, sem)
    if matrix is not None:
        return {ref: classify_proximity(matrix.distance(sit.target, ref), thresholds) for ref in sit.references}
    row = dataset.transcribed.get((sit.id, sem))
    if row is None:
        raise ValidationError(f"situation {sit.id}: no {sem.value} distances or transcribed row")
    return {ref: ProximityClass.from_code(row.codes[ref]) for ref in sit.references}


def nearest_reference(dataset: StudyDataset, situation: int | Situation, semantics: Semantics | str) -> str:
    sit = _situation(dataset, situation)
    sem = Semantics.parse(semantics)
    matrix = dataset.matrix_for(sit, sem)
    if matrix is not None:
        return min(sit.references, key=lambda ref: matrix.distance(sit.target, ref))
    row = dataset.transcribed.get((sit.id, sem))
    if row is None or row.nearest is None:
        raise ValidationError(f"situation {sit.id}: nearest {sem.value} reference unknown")
    return row.nearest


def cross_check(dataset: StudyDataset, thresholds: ProximityThresholds = ProximityThresholds()) -> list[str]:
    """Mismatches between matrix-computed rows and transcribed ones, if both exist."""
    problems = []
    for (sit_id, sem), row in sorted(dataset.transcribed.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
        sit = dataset.situations.get(sit_id)
        if sit is None or dataset.matrix_for(sit, sem) is None:
            continue
        computed = algo_row(dataset, sit, sem, thresholds)
        for ref in sit.references:
            if class_code(computed[ref]) != row.codes[ref]:
                problems.append(f"s{sit_id} {sem.value} {ref}: computed {class_code(computed[ref])}, table {row.codes[ref]}")
        if row.nearest is not None and nearest_reference(dataset, sit, sem) != row.nearest:
            problems.append(f"s{sit_id} {sem.value}: nearest computed {nearest_reference(dataset, sit, sem)}, table {row.nearest}")
    return problems


@dataclass(frozen=True)
class AgreementOptions:
    include_nr: bool = False
    nearest_only: bool = False
    semantics: Semantics = Semantics.EDGE_TO_EDGE

    def __post_init__(self) -> None:
        object.__setattr__(self, "semantics", Semantics.parse(self.semantics))

    @property
    def label(self) -> str:
        return f"{self.semantics.value} {'R2' if self.nearest_only else 'R1'} {'with NR' if self.include_nr else 'expressed'}"


@dataclass(frozen=True)
class Agreement:
    matches: int
    comparisons: int

    @property
    def rate(self) -> float:
        return self.matches / self.comparisons

    def to_dict(self) -> dict[str, Any]:
        return {"matches": self.matches, "comparisons": self.comparisons, "rate": self.rate}


def agreement_rate(
    dataset: StudyDataset,
    options: AgreementOptions = AgreementOptions(),
    thresholds: ProximityThresholds = ProximityThresholds(),
    situations: Iterable[int] | None = None,
) -> Agreement:
    """Count participant answers identical to the algorithm's class.

    Without ``include_nr`` only expressed answers are compared. With
    ``nearest_only`` only answers about the algorithm's selected (closest)
    reference are in scope.
    """
    chosen = sorted(situations) if situations is not None else sorted(dataset.situations)
    algo: dict[int, dict[str, str]] = {}
    scope_refs: dict[int, set[str]] = {}
    for sit_id in chosen:
        row = algo_row(dataset, sit_id, options.semantics, thresholds)
        algo[sit_id] = {ref: class_code(c) for ref, c in row.items()}
        if options.nearest_only:
            scope_refs[sit_id] = {nearest_reference(dataset, sit_id, options.semantics)}
        else:
            scope_refs[sit_id] = set(row)
    matches = comparisons = 0
    for (sit_id, _, ref), code in dataset.responses.items():
        if sit_id not in algo or ref not in scope_refs[sit_id]:
            continue
        if code == NO_RESPONSE and not options.include_nr:
            continue
        comparisons += 1
        matches += code == algo[sit_id][ref]
    if comparisons == 0:
        raise ValidationError("no responses in scope; cannot compute agreement")
    return Agreement(matches, comparisons)


def agreement_table(dataset: StudyDataset, thresholds: ProximityThresholds = ProximityThresholds()) -> list[tuple[AgreementOptions, Agreement | None]]:
    """Agreement for every option combination; ``None`` where a semantics is unavailable."""
    out = []
    for sem in (Semantics.EDGE_TO_EDGE, Semantics.INTER_CENTRE):
        for nearest_only in (False, True):
            for include_nr in (False, True):
                opts = AgreementOptions(include_nr, nearest_only, sem)
                try:
                    out.append((opts, agreement_rate(dataset, opts, thresholds)))
                except ValidationError:
                    out.append((opts, None))
    return out


def published_agreement() -> dict[tuple[str, bool, bool], tuple[int, int]]:
    """Counts reported for the study, keyed by (semantics, nearest_only, include_nr)."""
    raw = json.loads(data_path("published_agreement.json").read_text(encoding="utf-8"))
    return {
        (Semantics.parse(r["semantics"]).value, r["nearest_only"], r["include_nr"]): (r["matches"], r["comparisons"])
        for r in raw["results"]
    }
