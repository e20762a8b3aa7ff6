"""Event-driven SPD engine: ranging messages in, semantic position descriptions out."""

from __future__ import annotations

import itertools
import json
import logging
import math
import queue
import signal
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator, Mapping

from .bus import Bus, BusDisconnected, topic_matches
from .config import EngineConfig
from .model import SPD, RangingEstimate, Semantics, SodDatabase, ValidationError, edge_to_edge
from .spd import AlignmentInput, alignment_estimator, combine, proximity_estimator, room_determination

log = logging.getLogger(__name__)

Clock = Callable[[], float]


@dataclass(frozen=True)
class TopicScheme:
    ranging_prefix: str = "ranging"
    spd_prefix: str = "spd"
    config_topic: str = "engine/config"

    @property
    def ranging_pattern(self) -> str:
        return f"{self.ranging_prefix}/+/+"

    def ranging_topic(self, a: str, b: str) -> str:
        return f"{self.ranging_prefix}/{a}/{b}"

    def spd_topic(self, obj_id: str) -> str:
        return f"{self.spd_prefix}/{obj_id}"

    def parse_ranging(self, topic: str) -> tuple[str, str] | None:
        parts = topic.split("/")
        if len(parts) == 3 and parts[0] == self.ranging_prefix:
            return parts[1], parts[2]
        return None


class MalformedMessage(ValueError):
    pass


def parse_ranging_message(payload: bytes | str | Mapping[str, Any], topic_ids: tuple[str, str] | None = None) -> tuple[RangingEstimate, float]:
    """Decode ``{a, b, distance_m, timestamp}`` (plus optional ``semantics``, ``sample_count``)."""
    if isinstance(payload, Mapping):
        raw = payload
    else:
        try:
            raw = json.loads(payload)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise MalformedMessage(f"not JSON: {exc}") from exc
    if not isinstance(raw, Mapping):
        raise MalformedMessage("payload is not an object")
    a = raw.get("a", topic_ids[0] if topic_ids else None)
    b = raw.get("b", topic_ids[1] if topic_ids else None)
    if topic_ids is not None and {a, b} != set(topic_ids):
        raise MalformedMessage(f"payload ids {a}/{b} disagree with topic {topic_ids}")
    try:
        distance = float(raw["distance_m"])
        timestamp = float(raw.get("timestamp", 0.0))
        semantics = Semantics.parse(raw.get("semantics", Semantics.INTER_CENTRE))
        est = RangingEstimate(str(a), str(b), distance, int(raw.get("sample_count", 1)), semantics)
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedMessage(str(exc)) from exc
    if not math.isfinite(timestamp):
        raise MalformedMessage("non-finite timestamp")
    return est, timestamp


def ranging_message(a: str, b: str, distance_m: float, timestamp: float, **extra: Any) -> str:
    return json.dumps({"a": a, "b": b, "distance_m": distance_m, "timestamp": timestamp, **extra})


@dataclass(frozen=True)
class CacheEntry:
    estimate: RangingEstimate
    timestamp: float
    last_update: float


class DistanceCache:
    """Latest estimate per unordered pair; entries older than ``staleness`` are invisible."""

    def __init__(self, staleness: float = 60.0) -> None:
        self.staleness = staleness
        self._entries: dict[frozenset[str], CacheEntry] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def put(self, estimate: RangingEstimate, timestamp: float, now: float) -> bool:
        """Store unless a strictly newer message already holds the pair."""
        key = estimate.pair
        current = self._entries.get(key)
        if current is not None and current.timestamp > timestamp:
            return False
        self._entries[key] = CacheEntry(estimate, timestamp, now)
        return True

    def _fresh(self, entry: CacheEntry, now: float) -> bool:
        return now - entry.last_update <= self.staleness

    def get(self, a: str, b: str, now: float) -> RangingEstimate | None:
        entry = self._entries.get(frozenset((a, b)))
        if entry is None or not self._fresh(entry, now):
            return None
        return entry.estimate

    def fresh_for(self, obj_id: str, now: float) -> list[RangingEstimate]:
        return [e.estimate for k, e in self._entries.items() if obj_id in k and self._fresh(e, now)]

    def ids(self) -> set[str]:
        return {i for k in self._entries for i in k}

    def entries(self) -> dict[frozenset[str], CacheEntry]:
        return dict(self._entries)


class Engine:
    """Owns the distance cache; ingest and evaluate must be called from one thread."""

    def __init__(self, sod: SodDatabase, config: EngineConfig | None = None, clock: Clock = time.monotonic) -> None:
        self.sod = sod
        self.config = config or EngineConfig()
        self.clock = clock
        self.cache = DistanceCache(self.config.staleness_s)
        self.errors = 0

    def set_config(self, config: EngineConfig) -> None:
        self.config = config
        self.cache.staleness = config.staleness_s

    def ingest(
        self,
        message: bytes | str | Mapping[str, Any] | RangingEstimate,
        topic_ids: tuple[str, str] | None = None,
        timestamp: float | None = None,
    ) -> set[str]:
        """Update the cache; returns the mobile objects whose description may change.

        Bad messages are counted in ``errors`` and dropped.
        """
        try:
            if isinstance(message, RangingEstimate):
                est, ts = message, (timestamp if timestamp is not None else self.clock())
            else:
                est, ts = parse_ranging_message(message, topic_ids)
            for obj_id in (est.a, est.b):
                if obj_id not in self.sod:
                    raise MalformedMessage(f"unknown object id {obj_id!r}")
        except (MalformedMessage, ValidationError) as exc:
            self.errors += 1
            log.warning("dropped ranging message: %s", exc)
            return set()
        self.cache.put(est, ts, self.clock())
        affected = {i for i in (est.a, est.b) if not self.sod[i].is_fixed}
        if not affected:
            # a reference-reference distance can only matter as an alignment baseline
            affected = {o.id for o in self.sod.mobiles() if o.id in self.cache.ids()}
        return affected

    def _as(self, est: RangingEstimate, semantics: Semantics) -> float:
        if est.semantics is semantics:
            return est.distance
        ra = self.sod[est.a].bounding_radius
        rb = self.sod[est.b].bounding_radius
        if semantics is Semantics.EDGE_TO_EDGE:
            return edge_to_edge(est.distance, ra, rb)
        return est.distance + ra + rb

    def evaluate(self, target: str) -> SPD:
        if target not in self.sod:
            raise ValidationError(f"unknown target {target!r}")
        cfg = self.config
        now = self.clock()
        refs = [(est.other(target), est) for est in self.cache.fresh_for(target, now) if self.sod[est.other(target)].is_fixed]
        refs.sort(key=lambda item: (self._as(item[1], Semantics.INTER_CENTRE), item[0]))
        fragments = []

        if cfg.enabled("room"):
            neighbours = [(ref, self._as(est, Semantics.INTER_CENTRE)) for ref, est in refs]
            room = room_determination(target, neighbours, self.sod, cfg.room_vote, cfg.templates)
            if room is not None:
                fragments.append(room)

        if cfg.enabled("proximity") and refs:
            sem = cfg.proximity_semantics
            converted = [
                (ref, RangingEstimate(est.a, est.b, self._as(est, sem), est.sample_count, sem)) for ref, est in refs
            ]
            fragments += proximity_estimator(
                target, converted, self.sod, cfg.thresholds, cfg.nearest_only, cfg.templates
            )

        if cfg.enabled("alignment"):
            fragments += alignment_estimator(target, self._alignment_pairs(refs, now), self.sod, cfg.alignment, cfg.templates)

        return combine(fragments, subject=target)

    def _alignment_pairs(self, refs: list[tuple[str, RangingEstimate]], now: float) -> Iterator[AlignmentInput]:
        for (ref_a, est_a), (ref_b, est_b) in itertools.combinations(refs, 2):
            d_a = self._as(est_a, Semantics.INTER_CENTRE)
            d_b = self._as(est_b, Semantics.INTER_CENTRE)
            if d_a <= 0 or d_b <= 0:
                continue
            baseline = self.sod.centre_distance(ref_a, ref_b)
            if baseline is None:
                measured = self.cache.get(ref_a, ref_b, now)
                if measured is None:
                    continue
                baseline = self._as(measured, Semantics.INTER_CENTRE)
            if baseline <= 0:
                continue
            yield AlignmentInput(ref_a, ref_b, d_a, d_b, baseline)


_RECONNECT = object()


class SpdService:
    """Bus-facing loop around an :class:`Engine`.

    Transport threads only enqueue; :meth:`run` (or :meth:`drain` in tests)
    is the single consumer. Each target is re-evaluated at most once per
    debounce window and published only when its rendered text changed.
    """

    def __init__(
        self,
        engine: Engine,
        bus: Bus,
        topics: TopicScheme = TopicScheme(),
        sleep: Callable[[float], None] = time.sleep,
        backoff_initial: float = 0.1,
        backoff_max: float = 5.0,
    ) -> None:
        self.engine = engine
        self.bus = bus
        self.topics = topics
        self.sleep = sleep
        self.backoff_initial = backoff_initial
        self.backoff_max = backoff_max
        self._queue: queue.Queue[Any] = queue.Queue()
        self._pending: dict[str, float] = {}
        self.last_published: dict[str, str] = {}
        self.published_count = 0
        self.reconnects = 0
        bus.on_disconnect(lambda: self._queue.put(_RECONNECT))

    def start(self, stop: threading.Event | None = None) -> None:
        self._connect(stop)

    def _connect(self, stop: threading.Event | None = None, max_attempts: int | None = None) -> None:
        delay = self.backoff_initial
        attempt = 0
        while True:
            attempt += 1
            try:
                self.bus.connect()
                self.bus.subscribe(self.topics.ranging_pattern, self._on_message)
                self.bus.subscribe(self.topics.config_topic, self._on_message)
                return
            except BusDisconnected as exc:
                if (max_attempts is not None and attempt >= max_attempts) or (stop is not None and stop.is_set()):
                    raise
                log.warning("bus connect failed (%s); retrying in %.2fs", exc, delay)
                self.sleep(delay)
                delay = min(self.backoff_max, delay * 2)

    def _on_message(self, topic: str, payload: bytes) -> None:
        self._queue.put((topic, payload))

    def _handle(self, item: Any, stop: threading.Event | None = None) -> None:
        if item is _RECONNECT:
            if not self.bus.connected:
                self.reconnects += 1
                self._connect(stop)
            return
        topic, payload = item
        if topic_matches(self.topics.config_topic, topic):
            self._reload(payload)
            return
        now = self.engine.clock()
        for target in self.engine.ingest(payload, self.topics.parse_ranging(topic)):
            self._pending.setdefault(target, now + self.engine.config.debounce_s)

    def _reload(self, payload: bytes) -> None:
        try:
            self.engine.set_config(self.engine.config.merged(json.loads(payload)))
        except (ValueError, TypeError, AttributeError) as exc:
            self.engine.errors += 1
            log.warning("rejected config update: %s", exc)
            return
        log.info("configuration reloaded")
        now = self.engine.clock()
        for obj in self.engine.sod.mobiles():
            if obj.id in self.engine.cache.ids():
                self._pending.setdefault(obj.id, now)

    def publish_due(self, force: bool = False) -> None:
        now = self.engine.clock()
        for target, due in sorted(self._pending.items()):
            if force or due <= now:
                spd = self.engine.evaluate(target)
                if self.last_published.get(target) != spd.rendered:
                    payload = json.dumps({**spd.to_dict(), "sentence": spd.sentence})
                    try:
                        self.bus.publish(self.topics.spd_topic(target), payload)
                    except BusDisconnected:
                        self._queue.put(_RECONNECT)
                        continue
                    self.last_published[target] = spd.rendered
                    self.published_count += 1
                del self._pending[target]

    def drain(self, flush: bool = False) -> None:
        """Process everything queued, then publish what is due (everything if ``flush``)."""
        while True:
            try:
                item = self._queue.get_nowait()
            except queue.Empty:
                break
            self._handle(item)
        self.publish_due(force=flush)

    def run(self, stop: threading.Event, poll: float = 0.05) -> None:
        while not stop.is_set():
            try:
                item = self._queue.get(timeout=poll)
            except queue.Empty:
                pass
            else:
                try:
                    self._handle(item, stop)
                except BusDisconnected:
                    break
            self.publish_due()
        # inputs already taken off the bus still get answered
        self.drain(flush=True)


def read_session(path: str | Path) -> Iterator[dict[str, Any]]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield json.loads(line)


def replay_session(messages: Iterable[Mapping[str, Any]], bus: Bus, topics: TopicScheme = TopicScheme()) -> int:
    """Publish recorded ranging payloads onto the bus; returns the count."""
    n = 0
    for msg in messages:
        bus.publish(topics.ranging_topic(msg["a"], msg["b"]), json.dumps(msg))
        n += 1
    return n


def serve(bus: Bus, sod: SodDatabase, config: EngineConfig, stop: threading.Event | None = None) -> SpdService:
    """Run the engine against ``bus`` until SIGINT/SIGTERM or ``stop`` is set."""
    stop = stop or threading.Event()
    if threading.current_thread() is threading.main_thread():
        for sig in (signal.SIGINT, signal.SIGTERM):
            signal.signal(sig, lambda *_: stop.set())
    service = SpdService(Engine(sod, config), bus)
    service.start(stop)
    log.info("serving %d objects", len(sod))
    service.run(stop)
    if bus.connected:
        bus.disconnect()
    return service
