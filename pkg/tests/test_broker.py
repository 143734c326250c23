import itertools
import random
import threading

import pytest

from conftest import wait_for
from eopipe.broker import (
    DATA_AVAILABLE, JOBS_CREATED, ROUTING_KEYS, Broker, BrokerStopped, BufferOverflow, parse_pattern,
    parse_routing_key, routing_key_matches,
)
from oracles import topic_oracle


def test_routing_keys_are_exact():
    assert ROUTING_KEYS == (
        "wacodis.jobs.created", "wacodis.jobs.deleted", "wacodis.data.available",
        "wacodis.executions.started", "wacodis.executions.failed", "wacodis.products.new",
    )


def test_match_examples():
    assert routing_key_matches("wacodis.products.new", "wacodis.products.new")
    assert routing_key_matches("wacodis.*.new", "wacodis.products.new")
    assert not routing_key_matches("wacodis.*.new", "wacodis.a.b.new")
    assert routing_key_matches("wacodis.#", "wacodis")
    assert routing_key_matches("wacodis.#", "wacodis.jobs.created")
    assert not routing_key_matches("wacodis.#", "other.jobs")


def test_match_exhaustive_against_oracle():
    alphabet = ["a", "b", "c"]
    keys = [k for n in range(1, 4) for k in itertools.product(alphabet, repeat=n)]
    pattern_tokens = alphabet + ["*", "#"]
    patterns = [p for n in range(1, 4) for p in itertools.product(pattern_tokens, repeat=n)
                if p.count("#") <= 1]
    for p in patterns:
        for k in keys:
            assert routing_key_matches(".".join(p), ".".join(k)) == topic_oracle(list(p), list(k)), (p, k)


@pytest.mark.parametrize("bad", ["", "Wacodis.jobs", "a..b", "a.b-c", ".".join("a" * 9)])
def test_invalid_keys(bad):
    with pytest.raises(ValueError):
        parse_routing_key(bad)


@pytest.mark.parametrize("bad", ["a.#.#", "a.b*", ""])
def test_invalid_patterns(bad):
    with pytest.raises(ValueError):
        parse_pattern(bad)


def test_single_delivery_and_drop():
    b = Broker()
    sub = b.subscribe("wacodis.jobs.*", "t")
    b.publish(JOBS_CREATED, {"jobId": "x"})
    b.publish(DATA_AVAILABLE, {"n": 1})  # no subscriber: dropped, no error
    msg = sub.get(timeout=1)
    assert msg.payload == {"jobId": "x"} and msg.routing_key == JOBS_CREATED
    assert sub.pending() == 0


def test_fan_out_shares_message_id():
    b = Broker()
    s1 = b.subscribe("wacodis.#", "one")
    s2 = b.subscribe("wacodis.jobs.created", "two")
    mid = b.publish(JOBS_CREATED, {})
    assert s1.get(timeout=1).message_id == s2.get(timeout=1).message_id == mid


def test_order_and_no_replay():
    b = Broker()
    b.publish(JOBS_CREATED, {"i": 0})
    sub = b.subscribe("wacodis.#", "t")
    for i in range(1, 4):
        b.publish(JOBS_CREATED, {"i": i})
    assert [sub.get(timeout=1).payload["i"] for _ in range(3)] == [1, 2, 3]
    assert sub.pending() == 0


def test_payload_not_shared_with_publisher():
    b = Broker()
    sub = b.subscribe("wacodis.#", "t")
    payload = {"nested": {"v": [1, 2]}}
    b.publish(JOBS_CREATED, payload)
    payload["nested"]["v"].append(3)
    assert sub.get(timeout=1).payload == {"nested": {"v": [1, 2]}}


def test_handler_delivery_and_unsubscribe():
    b = Broker()
    got = []
    sub = b.subscribe("wacodis.jobs.#", "h", got.append)
    b.publish(JOBS_CREATED, {"i": 1})
    assert b.wait_idle(2)
    sub.unsubscribe()
    b.publish(JOBS_CREATED, {"i": 2})
    assert [m.payload["i"] for m in got] == [1]


def test_overflow_is_reported():
    b = Broker(buffer_size=2)
    b.subscribe("wacodis.#", "slow")
    b.publish(JOBS_CREATED, {})
    b.publish(JOBS_CREATED, {})
    with pytest.raises(BufferOverflow):
        b.publish(JOBS_CREATED, {})


def test_stopped_broker():
    b = Broker()
    b.stop()
    with pytest.raises(BrokerStopped):
        b.publish(JOBS_CREATED, {})
    with pytest.raises(BrokerStopped):
        b.subscribe("wacodis.#", "late")


def test_redelivery_with_consumer_dedupe():
    b = Broker(redeliver=2)
    seen, effects = set(), []

    def consumer(msg):
        if msg.message_id in seen:
            return
        seen.add(msg.message_id)
        effects.append(msg.payload["i"])

    sub = b.subscribe("wacodis.#", "dedupe", consumer)
    for i in range(5):
        b.publish(JOBS_CREATED, {"i": i})
    assert b.wait_idle(2)
    assert sub.delivered == 10
    assert effects == [0, 1, 2, 3, 4]


def test_fan_out_completeness_random():
    rng = random.Random(3)
    tokens = ["wacodis", "jobs", "data", "x"]
    b = Broker()
    patterns = []
    for i in range(40):
        segs = [rng.choice(tokens + ["*", "#"]) for _ in range(rng.randint(1, 4))]
        while segs.count("#") > 1:
            segs.remove("#")
        patterns.append(".".join(segs))
    subs = [b.subscribe(p, f"s{i}") for i, p in enumerate(patterns)]
    for _ in range(100):
        key = ".".join(rng.choice(tokens) for _ in range(rng.randint(1, 4)))
        mid = b.publish(key, {})
        for p, s in zip(patterns, subs):
            if topic_oracle(p.split("."), key.split(".")):
                assert s.get(timeout=1).message_id == mid
            assert s.pending() == 0


def test_concurrent_publishers_keep_fifo_per_subscription():
    b = Broker()
    got = []
    b.subscribe("wacodis.#", "order", lambda m: got.append(m.sequence))

    def publisher():
        for _ in range(200):
            b.publish(JOBS_CREATED, {})

    threads = [threading.Thread(target=publisher) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert wait_for(lambda: len(got) == 800)
    assert got == sorted(got) and len(set(got)) == 800
