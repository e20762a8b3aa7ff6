"""Minimal publish/subscribe bus: in-process loopback and an optional MQTT binding."""

from __future__ import annotations

import logging
import threading
from typing import Callable, Protocol
from urllib.parse import urlparse

log = logging.getLogger(__name__)

Handler = Callable[[str, bytes], None]


class BusDisconnected(ConnectionError):
    pass


class Bus(Protocol):
    def connect(self) -> None: ...

    def disconnect(self) -> None: ...

    @property
    def connected(self) -> bool: ...

    def subscribe(self, pattern: str, handler: Handler) -> None: ...

    def publish(self, topic: str, payload: bytes | str) -> None: ...

    def on_disconnect(self, callback: Callable[[], None]) -> None: ...


def topic_matches(pattern: str, topic: str) -> bool:
    """MQTT-style match: ``+`` is one level, a trailing ``#`` is any remainder."""
    p_parts = pattern.split("/")
    t_parts = topic.split("/")
    for i, p in enumerate(p_parts):
        if p == "#":
            return i == len(p_parts) - 1
        if i >= len(t_parts):
            return False
        if p != "+" and p != t_parts[i]:
            return False
    return len(p_parts) == len(t_parts)


class LoopbackBus:
    """Synchronous in-process bus; subscribers run on the publisher's thread.

    A drop forgets subscriptions, like a clean-session broker would.
    ``fail_connects`` makes the next N connect() calls raise, for reconnect tests.
    """

    def __init__(self) -> None:
        self._subs: list[tuple[str, Handler]] = []
        self._connected = False
        self._lock = threading.Lock()
        self._disconnect_callbacks: list[Callable[[], None]] = []
        self.fail_connects = 0
        self.connect_attempts = 0
        self.published: list[tuple[str, bytes]] = []

    @property
    def connected(self) -> bool:
        return self._connected

    def connect(self) -> None:
        self.connect_attempts += 1
        if self.fail_connects > 0:
            self.fail_connects -= 1
            raise BusDisconnected("loopback connect refused")
        self._connected = True

    def disconnect(self) -> None:
        self._connected = False

    def drop(self) -> None:
        """Simulate a transport loss."""
        with self._lock:
            self._connected = False
            self._subs.clear()
        for cb in list(self._disconnect_callbacks):
            cb()

    def on_disconnect(self, callback: Callable[[], None]) -> None:
        self._disconnect_callbacks.append(callback)

    def subscribe(self, pattern: str, handler: Handler) -> None:
        if not self._connected:
            raise BusDisconnected("subscribe while disconnected")
        with self._lock:
            self._subs.append((pattern, handler))

    def publish(self, topic: str, payload: bytes | str) -> None:
        if not self._connected:
            raise BusDisconnected("publish while disconnected")
        data = payload.encode() if isinstance(payload, str) else payload
        with self._lock:
            self.published.append((topic, data))
            targets = [h for p, h in self._subs if topic_matches(p, topic)]
        for handler in targets:
            handler(topic, data)

    def messages(self, pattern: str = "#") -> list[tuple[str, bytes]]:
        return [(t, p) for t, p in self.published if topic_matches(pattern, t)]


class MqttBus:
    """MQTT 3.1.1, QoS 0 adapter over paho-mqtt (install the ``mqtt`` extra)."""

    def __init__(self, url: str, client_id: str = "semloc-engine", keepalive: int = 30) -> None:
        try:
            import paho.mqtt.client as mqtt
        except ImportError as exc:  # pragma: no cover - depends on optional extra
            raise RuntimeError("MQTT support needs the 'mqtt' extra: pip install semloc[mqtt]") from exc
        self.host, self.port = parse_mqtt_url(url)
        self.keepalive = keepalive
        self._mqtt = mqtt
        self._client = mqtt.Client(
            mqtt.CallbackAPIVersion.VERSION2, client_id=client_id, protocol=mqtt.MQTTv311, clean_session=True
        )
        self._handlers: list[tuple[str, Handler]] = []
        self._disconnect_callbacks: list[Callable[[], None]] = []
        self._connected = threading.Event()
        self._client.on_message = self._dispatch
        self._client.on_connect = lambda *a, **k: self._connected.set()
        self._client.on_disconnect = self._handle_disconnect

    @property
    def connected(self) -> bool:
        return self._connected.is_set()

    def connect(self, timeout: float = 10.0) -> None:
        self._stop_network()
        self._handlers.clear()
        self._connected.clear()
        try:
            self._client.connect(self.host, self.port, self.keepalive)
        except OSError as exc:
            raise BusDisconnected(str(exc)) from exc
        self._running = True
        self._thread = threading.Thread(target=self._network_loop, name="mqtt-network", daemon=True)
        self._thread.start()
        if not self._connected.wait(timeout):
            self._stop_network()
            raise BusDisconnected(f"no CONNACK from {self.host}:{self.port}")

    def disconnect(self) -> None:
        self._client.disconnect()
        self._stop_network()
        self._connected.clear()

    def _network_loop(self) -> None:
        # one connection per thread; the engine service owns reconnection
        while self._running:
            if self._client.loop(timeout=0.5) != self._mqtt.MQTT_ERR_SUCCESS:
                break

    def _stop_network(self) -> None:
        self._running = False
        thread = getattr(self, "_thread", None)
        if thread is not None and thread is not threading.current_thread():
            thread.join(timeout=2.0)
        self._thread = None

    def on_disconnect(self, callback: Callable[[], None]) -> None:
        self._disconnect_callbacks.append(callback)

    def subscribe(self, pattern: str, handler: Handler) -> None:
        self._handlers.append((pattern, handler))
        self._client.subscribe(pattern, qos=0)

    def publish(self, topic: str, payload: bytes | str) -> None:
        info = self._client.publish(topic, payload, qos=0)
        if info.rc != self._mqtt.MQTT_ERR_SUCCESS:
            raise BusDisconnected(f"publish failed rc={info.rc}")

    def _dispatch(self, client, userdata, message) -> None:
        for pattern, handler in list(self._handlers):
            if topic_matches(pattern, message.topic):
                handler(message.topic, message.payload)

    def _handle_disconnect(self, client, userdata, flags, reason_code, properties=None) -> None:
        self._connected.clear()
        # reconnection is driven by the service, not paho's loop
        for cb in list(self._disconnect_callbacks):
            cb()


def parse_mqtt_url(url: str) -> tuple[str, int]:
    parsed = urlparse(url if "://" in url else f"mqtt://{url}")
    if parsed.scheme not in ("mqtt", "tcp"):
        raise ValueError(f"unsupported bus scheme {parsed.scheme!r}")
    if not parsed.hostname:
        raise ValueError(f"no host in bus url {url!r}")
    return parsed.hostname, parsed.port or 1883


def open_bus(spec: str) -> LoopbackBus | MqttBus:
    if spec == "loopback":
        return LoopbackBus()
    return MqttBus(spec)
