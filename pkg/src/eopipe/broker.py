"""In-process topic exchange with AMQP-style wildcard subscriptions.

Routing keys are dot-separated lowercase tokens. In subscription patterns
``*`` matches exactly one segment and ``#`` matches zero or more.
Delivery is at-least-once: consumers dedupe on ``message_id``.
"""

from __future__ import annotations

import copy
import itertools
import logging
import queue
import re
import threading
import uuid
from dataclasses import dataclass, replace
from datetime import datetime
from typing import Any, Callable

from .clock import Clock, SystemClock

logger = logging.getLogger(__name__)

JOBS_CREATED = "wacodis.jobs.created"
JOBS_DELETED = "wacodis.jobs.deleted"
DATA_AVAILABLE = "wacodis.data.available"
EXECUTIONS_STARTED = "wacodis.executions.started"
EXECUTIONS_FAILED = "wacodis.executions.failed"
PRODUCTS_NEW = "wacodis.products.new"
ROUTING_KEYS = (
    JOBS_CREATED, JOBS_DELETED, DATA_AVAILABLE, EXECUTIONS_STARTED, EXECUTIONS_FAILED, PRODUCTS_NEW,
)

_TOKEN = re.compile(r"^[a-z0-9_]+$")
MAX_SEGMENTS = 8


class BrokerError(RuntimeError):
    pass


class BrokerStopped(BrokerError):
    pass


class BufferOverflow(BrokerError):
    """A subscriber's bounded buffer is full; the message was not enqueued for it."""


def parse_routing_key(key: str) -> tuple[str, ...]:
    segments = tuple(key.split("."))
    if not 1 <= len(segments) <= MAX_SEGMENTS or not all(_TOKEN.match(s) for s in segments):
        raise ValueError(f"invalid routing key {key!r}")
    return segments


def parse_pattern(pattern: str) -> tuple[str, ...]:
    segments = tuple(pattern.split("."))
    if not 1 <= len(segments) <= MAX_SEGMENTS:
        raise ValueError(f"invalid pattern {pattern!r}")
    for s in segments:
        if s not in ("*", "#") and not _TOKEN.match(s):
            raise ValueError(f"invalid pattern segment {s!r} in {pattern!r}")
    if segments.count("#") > 1:
        raise ValueError(f"at most one '#' allowed in {pattern!r}")
    return segments


def routing_key_matches(pattern: str | tuple[str, ...], key: str | tuple[str, ...]) -> bool:
    p = parse_pattern(pattern) if isinstance(pattern, str) else pattern
    k = parse_routing_key(key) if isinstance(key, str) else key
    if "#" not in p:
        return len(p) == len(k) and all(a == "*" or a == b for a, b in zip(p, k))
    # single '#': prefix and suffix match around it, '#' absorbs the middle
    h = p.index("#")
    head, tail = p[:h], p[h + 1 :]
    if len(k) < len(head) + len(tail):
        return False
    fits = lambda pp, kk: all(a == "*" or a == b for a, b in zip(pp, kk))  # noqa: E731
    return fits(head, k[: len(head)]) and fits(tail, k[len(k) - len(tail) :])


@dataclass(frozen=True)
class BrokerMessage:
    message_id: str
    routing_key: str
    timestamp: datetime
    payload: Any
    sequence: int


Handler = Callable[[BrokerMessage], None]


class Subscription:
    """Bounded FIFO of messages for one consumer.

    With a handler, a dedicated thread delivers messages one at a time.
    Without one, the consumer pulls with :meth:`get`.
    """

    def __init__(self, broker: "Broker", pattern: str, consumer_name: str,
                 handler: Handler | None, buffer_size: int):
        self.broker = broker
        self.pattern = pattern
        self.segments = parse_pattern(pattern)
        self.consumer_name = consumer_name
        self.handler = handler
        self.delivered = 0
        self.overflows = 0
        self._queue: queue.Queue[BrokerMessage | None] = queue.Queue(maxsize=buffer_size)
        self._active = True
        self._thread: threading.Thread | None = None
        if handler is not None:
            self._thread = threading.Thread(
                target=self._run, name=f"sub-{consumer_name}", daemon=True
            )
            self._thread.start()

    @property
    def active(self) -> bool:
        return self._active

    def _offer(self, message: BrokerMessage) -> None:
        try:
            self._queue.put_nowait(replace(message, payload=copy.deepcopy(message.payload)))
        except queue.Full:
            self.overflows += 1
            raise BufferOverflow(
                f"subscriber {self.consumer_name!r} buffer full, dropped {message.message_id}"
            ) from None

    def get(self, timeout: float | None = None) -> BrokerMessage:
        """Pull the next message (pull-mode subscriptions only)."""
        msg = self._queue.get(timeout=timeout)
        self._queue.task_done()
        if msg is None:
            raise BrokerStopped("subscription closed")
        self.delivered += 1
        return msg

    def pending(self) -> int:
        return self._queue.qsize()

    def _run(self) -> None:
        while True:
            msg = self._queue.get()
            try:
                if msg is None:
                    return
                if not self._active:
                    continue
                try:
                    self.handler(msg)
                except Exception:
                    logger.exception("consumer %s failed on %s (%s)",
                                     self.consumer_name, msg.routing_key, msg.message_id)
                self.delivered += 1
            finally:
                self._queue.task_done()

    def join(self) -> None:
        self._queue.join()

    def unsubscribe(self) -> None:
        self.broker._remove(self)

    def _close(self) -> None:
        self._active = False
        try:
            self._queue.put_nowait(None)
        except queue.Full:
            # drain so the sentinel fits; remaining messages would be skipped anyway
            while True:
                try:
                    self._queue.get_nowait()
                    self._queue.task_done()
                except queue.Empty:
                    break
            self._queue.put_nowait(None)


class Broker:
    """Topic-routing publish/subscribe bus.

    ``redeliver`` makes every message enqueued that many times per matching
    subscription; tests use it to exercise consumer idempotence.
    """

    def __init__(self, buffer_size: int = 10_000, clock: Clock | None = None, redeliver: int = 1):
        self.buffer_size = buffer_size
        self.clock = clock or SystemClock()
        self.redeliver = redeliver
        self._subs: list[Subscription] = []
        self._lock = threading.Lock()
        self._seq = itertools.count(1)
        self._running = True
        self.published = 0

    def subscribe(self, pattern: str, consumer_name: str, handler: Handler | None = None,
                  buffer_size: int | None = None) -> Subscription:
        with self._lock:
            if not self._running:
                raise BrokerStopped("broker stopped")
            sub = Subscription(self, pattern, consumer_name, handler, buffer_size or self.buffer_size)
            self._subs.append(sub)
        logger.debug("%s subscribed to %s", consumer_name, pattern)
        return sub

    def publish(self, key: str, payload: Any) -> str:
        segments = parse_routing_key(key)
        # the lock fixes one global order across all subscriptions
        with self._lock:
            if not self._running:
                raise BrokerStopped("broker stopped")
            msg = BrokerMessage(
                message_id=str(uuid.uuid4()),
                routing_key=key,
                timestamp=self.clock.now(),
                payload=copy.deepcopy(payload),
                sequence=next(self._seq),
            )
            targets = [s for s in self._subs if routing_key_matches(s.segments, segments)]
            overflow: list[str] = []
            for sub in targets:
                for _ in range(self.redeliver):
                    try:
                        sub._offer(msg)
                    except BufferOverflow as exc:
                        overflow.append(str(exc))
            self.published += 1
        if not targets:
            logger.debug("no subscriber for %s, message dropped", key)
        if overflow:
            raise BufferOverflow("; ".join(overflow))
        return msg.message_id

    def subscribers_for(self, key: str) -> list[Subscription]:
        segments = parse_routing_key(key)
        with self._lock:
            return [s for s in self._subs if routing_key_matches(s.segments, segments)]

    def wait_idle(self, timeout: float = 10.0) -> bool:
        """Block until every handler-driven subscription has drained its buffer."""
        done = threading.Event()

        def _join():
            while True:
                with self._lock:
                    subs = [s for s in self._subs if s.handler is not None]
                for s in subs:
                    s.join()
                if all(s.pending() == 0 for s in subs):
                    done.set()
                    return

        threading.Thread(target=_join, daemon=True).start()
        return done.wait(timeout)

    def _remove(self, sub: Subscription) -> None:
        with self._lock:
            if sub in self._subs:
                self._subs.remove(sub)
        sub._close()

    def stop(self) -> None:
        with self._lock:
            self._running = False
            subs, self._subs = self._subs, []
        for s in subs:
            s._close()

    @property
    def running(self) -> bool:
        return self._running
