"""Command line entry point: ``semloc``."""

from __future__ import annotations

import json
import logging
import sys
import threading
from pathlib import Path
from typing import Any

import click

from . import __version__
from .bus import LoopbackBus, open_bus
from .config import EngineConfig, load_config
from .engine import Engine, SpdService, read_session, replay_session, serve
from .model import RangingEstimate, ValidationError, load_sod
from .ranging import TraceEntry, load_noise_model, load_scenario, read_trace, run_rail_scenario, write_trace
from .spd import AlignmentConfig
from .study import (
    AgreementOptions,
    DistanceMatrix,
    agreement_rate,
    agreement_table,
    data_path,
    default_study,
    ingest_study,
    published_agreement,
)
from .testbed import alignment_report

FORMATS = click.Choice(["table", "json"])
VALIDATION_EXIT = 2


def _resolve(path: str | None, default: str | None = None) -> Path | None:
    """Existing path as given, else a packaged data file of that name."""
    if path is None:
        return data_path(default) if default else None
    p = Path(path)
    if p.exists():
        return p
    packaged = data_path(p.name)
    if packaged.exists():
        return packaged
    raise click.BadParameter(f"{path}: no such file")


def _fail(exc: Exception) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(VALIDATION_EXIT)


def _emit(data: Any, fmt: str, table: str) -> None:
    click.echo(json.dumps(data, indent=2) if fmt == "json" else table)


@click.group()
@click.version_option(__version__)
@click.option("-v", "--verbose", is_flag=True, help="Log engine activity to stderr.")
def main(verbose: bool) -> None:
    """Semantic position descriptions from pairwise ranging."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")


def _load_distances(path: Path) -> list[RangingEstimate | dict]:
    if path.suffix == ".jsonl":
        return list(read_session(path))
    raw = json.loads(path.read_text(encoding="utf-8"))
    if isinstance(raw, dict) and "matrix" in raw:
        m = DistanceMatrix.from_dict(raw)
        out: list[RangingEstimate | dict] = []
        for pair, d in m.values.items():
            a, b = sorted(pair)
            out.append(RangingEstimate(a, b, d, 1, m.semantics))
        return out
    if isinstance(raw, list):
        return raw
    raise ValidationError(f"{path}: neither a distance matrix nor a list of ranging messages")


@main.command()
@click.argument("target")
@click.option("--distances", required=True, help="Distance matrix (JSON) or recorded session (JSONL).")
@click.option("--sod", default=None, help="SOD database file [default: packaged kitchen SOD].")
@click.option("--config", "config_path", default=None, help="Engine config file.")
@click.option("--format", "fmt", type=FORMATS, default="table")
def locate(target: str, distances: str, sod: str | None, config_path: str | None, fmt: str) -> None:
    """One-shot description of TARGET from a distances file."""
    try:
        engine = Engine(load_sod(_resolve(sod, "kitchen_sod.json")), load_config(_resolve(config_path)))
        for item in _load_distances(_resolve(distances)):
            engine.ingest(item)
        spd = engine.evaluate(target)
    except (ValidationError, OSError, json.JSONDecodeError) as exc:
        _fail(exc)
    _emit({**spd.to_dict(), "ingest_errors": engine.errors}, fmt, spd.rendered)


@main.group()
def simulate() -> None:
    """Ranging simulations."""


@simulate.command("rail")
@click.option("--scenario", default=None, help="Scenario file [default: packaged rail scenario].")
@click.option("--noise", default=None, help="Noise model file [default: packaged default model].")
@click.option("--steps", type=int, default=None, help="Override the step count.")
@click.option("--samples", type=int, default=None, help="Override samples per position.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--keep-samples", is_flag=True, help="Include raw readings in each record.")
@click.option("--out", type=click.Path(dir_okay=False, writable=True), default=None, help="Write JSONL here instead of stdout.")
def simulate_rail(scenario, noise, steps, samples, seed, keep_samples, out) -> None:
    """Move the mobile node along the rail and emit one JSON record per position."""
    try:
        sc = load_scenario(_resolve(scenario, "scenario_rail.json"))
        changes = {}
        if steps is not None:
            changes["step_count"] = steps
        if samples is not None:
            changes["samples_per_position"] = samples
        sc = sc.replace(**changes) if changes else sc
        model = load_noise_model(_resolve(noise, "noise_default.json"))
        trace = run_rail_scenario(sc, model, seed, keep_samples=keep_samples)
    except (ValidationError, OSError, KeyError) as exc:
        _fail(exc)
    if out:
        write_trace(trace, out)
        click.echo(f"wrote {len(trace)} positions to {out}", err=True)
    else:
        for entry in trace:
            click.echo(json.dumps(entry.to_record()))


@main.group("eval")
def eval_() -> None:
    """Reproduce evaluation results."""


@eval_.command("study")
@click.option("--semantics", type=click.Choice(["edge", "inter"]), default=None)
@click.option("--r2/--r1", "r2", default=None, help="Nearest-reference-only rule.")
@click.option("--include-nr/--exclude-nr", "include_nr", default=None, help="Compare 'no response' answers too.")
@click.option("--data-dir", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--format", "fmt", type=FORMATS, default="table")
def eval_study(semantics, r2, include_nr, data_dir, fmt) -> None:
    """Agreement between algorithm rows and participant answers.

    With no selection flags, every option combination is reported.
    """
    try:
        dataset = ingest_study(sorted(Path(data_dir).glob("*.json"))) if data_dir else default_study()
        published = published_agreement()
        if semantics is None and r2 is None and include_nr is None:
            rows = agreement_table(dataset)
        else:
            opts = AgreementOptions(
                include_nr=bool(include_nr), nearest_only=bool(r2), semantics=semantics or "edge"
            )
            rows = [(opts, agreement_rate(dataset, opts))]
    except (ValidationError, OSError) as exc:
        _fail(exc)
    records, lines = [], []
    for opts, result in rows:
        ref = published.get((opts.semantics.value, opts.nearest_only, opts.include_nr))
        rec: dict[str, Any] = {
            "semantics": opts.semantics.value,
            "nearest_only": opts.nearest_only,
            "include_nr": opts.include_nr,
            "result": result.to_dict() if result else None,
            "published": {"matches": ref[0], "comparisons": ref[1]} if ref else None,
        }
        flag = ""
        if result and ref:
            rec["deviation"] = result.matches - ref[0]
            flag = "" if abs(rec["deviation"]) <= 2 and result.comparisons == ref[1] else "  DEVIATES"
        records.append(rec)
        score = f"{result.matches}/{result.comparisons}, {100 * result.rate:.1f}%" if result else "n/a"
        pub = f"(published {ref[0]}/{ref[1]})" if ref else ""
        lines.append(f"{opts.label:<32} {score:<16} {pub}{flag}")
    _emit(records, fmt, "\n".join(lines))


@eval_.command("alignment")
@click.option("--trace", "trace_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSONL trace from 'simulate rail'; simulated on the fly when omitted.")
@click.option("--scenario", default=None)
@click.option("--noise", default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--threshold", type=float, default=30.0, show_default=True, help="Angle threshold (degrees).")
@click.option("--b", "node_b", default="B", show_default=True)
@click.option("--c", "node_c", default="C", show_default=True)
@click.option("--format", "fmt", type=FORMATS, default="table")
def eval_alignment(trace_path, scenario, noise, seed, threshold, node_b, node_c, fmt) -> None:
    """Success rate of both alignment variants per true-angle bucket."""
    try:
        sc = load_scenario(_resolve(scenario, "scenario_rail.json"))
        if trace_path:
            trace: list[TraceEntry] = list(read_trace(trace_path, sc.mobile_id))
        else:
            trace = run_rail_scenario(sc, load_noise_model(_resolve(noise, "noise_default.json")), seed, keep_samples=True)
        report = alignment_report(trace, sc.node_distance(node_b, node_c), AlignmentConfig(threshold), node_b, node_c)
    except (ValidationError, OSError, KeyError) as exc:
        _fail(exc)
    data = report.to_dict()
    lines = [f"samples {report.total}, removed {report.removed}, threshold {threshold:g} deg"]
    for name, bucket in data["buckets"].items():
        for variant in ("original", "revised"):
            v = bucket[variant]
            if bucket["samples"]:
                lines.append(
                    f"{name:<16} {variant:<9} n={bucket['samples']:<6} success {100 * v['success_rate']:6.2f}%  "
                    f"undecidable {100 * v['undecidable_rate']:6.2f}%"
                )
            else:
                lines.append(f"{name:<16} {variant:<9} n=0")
    _emit(data, fmt, "\n".join(lines))


@main.command("serve")
@click.option("--sod", default=None, help="SOD database file [default: packaged kitchen SOD].")
@click.option("--config", "config_path", default=None)
@click.option("--bus", "bus_spec", default="loopback", show_default=True, help="mqtt://host:port or 'loopback'.")
@click.option("--replay", default=None, help="Recorded session (JSONL) to publish onto the bus.")
def serve_cmd(sod, config_path, bus_spec, replay) -> None:
    """Subscribe to ranging topics and publish spd/<id> on change."""
    try:
        sod_db = load_sod(_resolve(sod, "kitchen_sod.json"))
        config = load_config(_resolve(config_path))
        session = list(read_session(_resolve(replay))) if replay else None
    except (ValidationError, OSError, json.JSONDecodeError) as exc:
        _fail(exc)
    if bus_spec == "loopback":
        if session is None:
            _fail(ValidationError("the loopback bus only makes sense with --replay"))
        bus = LoopbackBus()
        service = SpdService(Engine(sod_db, config), bus)
        service.start()
        replay_session(session, bus)
        service.drain(flush=True)
        for topic, payload in bus.messages("spd/#"):
            click.echo(f"{topic} {json.loads(payload)['rendered']}")
        return
    try:
        bus = open_bus(bus_spec)
    except ValueError as exc:
        _fail(exc)
    if session is not None:
        replayer = threading.Thread(target=_delayed_replay, args=(session, bus_spec), daemon=True)
        replayer.start()
    serve(bus, sod_db, config)


def _delayed_replay(session: list[dict], bus_spec: str) -> None:
    pub = open_bus(bus_spec)
    pub.connect()
    replay_session(session, pub)
    pub.disconnect()


@main.group("config")
def config_group() -> None:
    """Inspect configuration."""


@config_group.command("show")
@click.option("--config", "config_path", default=None, help="Show this file merged over the defaults.")
def config_show(config_path) -> None:
    try:
        cfg = load_config(_resolve(config_path)) if config_path else EngineConfig()
    except (ValidationError, OSError) as exc:
        _fail(exc)
    click.echo(json.dumps(cfg.to_dict(), indent=2))


if __name__ == "__main__":  # pragma: no cover
    main()
