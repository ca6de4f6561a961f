import hashlib
import statistics
import threading

import pytest
from hypothesis import given
from hypothesis import strategies as st

from wetrace.backend import (
    BackendStore,
    PublishError,
    PublishRequest,
    batch_digest,
    leading_zero_bits,
    pow_ok,
    solve_pow,
)
from wetrace.backend.store import CAP_EXCEEDED, DUPLICATE, INVALID_POW, MAX_BATCH

DAY = 24 * 3600


def blobs(n: int, tag: str = "m") -> list[bytes]:
    return [f"{tag}{i}".encode().ljust(50, b".") for i in range(n)]


def publish(store: BackendStore, messages, now: float = 0.0) -> int:
    return store.publish(PublishRequest.build(messages, store.difficulty), now)


def test_publish_then_poll_from_cursor():
    store = BackendStore(difficulty=4)
    assert publish(store, blobs(3, "a")) == 3
    got, cursor = store.poll(0)
    assert got == blobs(3, "a") and cursor == 3
    publish(store, blobs(2, "b"), now=5)
    got, cursor2 = store.poll(cursor)
    assert got == blobs(2, "b") and cursor2 == 5
    assert store.poll(cursor2) == ([], 5)


def test_purge_after_retention():
    store = BackendStore(difficulty=0)
    publish(store, blobs(2, "old"), now=0)
    publish(store, blobs(1, "new"), now=10 * DAY)
    assert store.purge(15 * DAY) == 2
    got, cursor = store.poll(0)
    assert got == blobs(1, "new") and cursor == 3
    assert store.purge(30 * DAY) == 1
    assert store.poll(0) == ([], 0)
    # cursors never restart after a purge
    publish(store, blobs(1, "later"), now=30 * DAY)
    assert store.poll(3)[1] == 4


def test_cap_and_empty_batches_rejected():
    store = BackendStore(difficulty=0)
    with pytest.raises(PublishError) as exc:
        publish(store, blobs(MAX_BATCH + 1))
    assert exc.value.reason == CAP_EXCEEDED
    with pytest.raises(PublishError):
        publish(store, [])
    assert publish(store, blobs(MAX_BATCH)) == MAX_BATCH
    assert store.rejected == 2


def test_duplicate_batch_rejected_until_retention():
    store = BackendStore(retention=100, difficulty=0)
    publish(store, blobs(2), now=0)
    with pytest.raises(PublishError) as exc:
        publish(store, list(reversed(blobs(2))), now=1)
    assert exc.value.reason == DUPLICATE
    store.purge(200)
    assert publish(store, blobs(2), now=200) == 2


def test_bad_nonce_rejected():
    store = BackendStore(difficulty=12)
    req = PublishRequest.build(blobs(1), 12)
    bad = PublishRequest(req.messages, (int.from_bytes(req.pow_nonce, "big") + 1).to_bytes(8, "big"))
    if pow_ok(bad.digest, bad.pow_nonce, 12):
        pytest.skip("neighbouring nonce happens to solve the puzzle")
    with pytest.raises(PublishError) as exc:
        store.publish(bad, 0)
    assert exc.value.reason == INVALID_POW
    assert len(store) == 0


def test_token_mode_replaces_pow():
    store = BackendStore(difficulty=32, token="hospital-7")
    req = PublishRequest(tuple(blobs(1)), bytes(8), token="hospital-7")
    assert store.publish(req, 0) == 1
    with pytest.raises(PublishError):
        store.publish(PublishRequest(tuple(blobs(1, "x")), bytes(8), token="wrong"), 0)


def test_leading_zero_bits_oracle():
    assert leading_zero_bits(b"\x00\x00\x01") == 23
    assert leading_zero_bits(b"\x80") == 0
    assert leading_zero_bits(bytes(4)) == 32


@given(st.lists(st.binary(min_size=1, max_size=40), min_size=1, max_size=8))
def test_digest_is_order_free_and_unambiguous(msgs):
    assert batch_digest(msgs) == batch_digest(list(reversed(msgs)))
    joined = b"".join(msgs)
    if len(msgs) > 1:
        assert batch_digest(msgs) != batch_digest([joined])


@pytest.mark.parametrize("difficulty", [0, 8, 12])
def test_solved_pow_verifies(difficulty):
    digest = hashlib.sha256(b"batch").digest()
    nonce = solve_pow(digest, difficulty)
    assert pow_ok(digest, nonce, difficulty)
    h = hashlib.sha256(digest + nonce).digest()
    assert int.from_bytes(h, "big") >> (256 - difficulty) == 0 if difficulty else True


def test_pow_cost_tracks_difficulty():
    attempts = []
    for trial in range(100):
        digest = hashlib.sha256(b"trial%d" % trial).digest()
        attempts.append(int.from_bytes(solve_pow(digest, 12), "big") + 1)
    median = statistics.median(attempts)
    # geometric with p = 2^-12: median ~ 2839, mean 4096
    assert 4096 / 4 <= median <= 4096 * 4


def test_concurrent_publish_and_poll_stay_consistent():
    store = BackendStore(difficulty=0)
    errors = []

    def writer(w):
        for i in range(20):
            publish(store, blobs(5, f"w{w}-{i}-"))

    def reader():
        last = 0
        for _ in range(200):
            got, cursor = store.poll(0)
            if len(got) != cursor or cursor < last:
                errors.append((len(got), cursor))
            last = cursor

    threads = [threading.Thread(target=writer, args=(w,)) for w in range(4)] + [threading.Thread(target=reader)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    got, cursor = store.poll(0)
    assert len(got) == len(set(got)) == cursor == 400
