import hashlib
import hmac
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wetrace import crypto
from wetrace.crypto import Ciphertext, MasterSeed, PrefixTag

from helpers import seed_of

# -- independent oracles -----------------------------------------------------

P = 2**255 - 19


def hkdf_sha256(ikm: bytes, info: bytes, length: int = 32, salt: bytes = b"") -> bytes:
    prk = hmac.new(salt or bytes(32), ikm, hashlib.sha256).digest()
    out, block = b"", b""
    for i in range(1, -(-length // 32) + 1):
        block = hmac.new(prk, block + info + bytes([i]), hashlib.sha256).digest()
        out += block
    return out[:length]


def x25519(scalar: bytes, u: bytes) -> bytes:
    """Textbook Montgomery ladder."""
    k = bytearray(scalar)
    k[0] &= 248
    k[31] &= 127
    k[31] |= 64
    k = int.from_bytes(k, "little")
    x1 = int.from_bytes(u, "little") & ((1 << 255) - 1)
    x2, z2, x3, z3, swap = 1, 0, x1, 1, 0
    for t in reversed(range(255)):
        bit = (k >> t) & 1
        swap ^= bit
        if swap:
            x2, x3, z2, z3 = x3, x2, z3, z2
        swap = bit
        a, b = x2 + z2, x2 - z2
        aa, bb = a * a % P, b * b % P
        e = aa - bb
        c, d = x3 + z3, x3 - z3
        da, cb = d * a % P, c * b % P
        x3, z3 = (da + cb) ** 2 % P, x1 * (da - cb) ** 2 % P
        x2, z2 = aa * bb % P, e * (aa + 121665 * e) % P
    if swap:
        x2, z2 = x3, z3
    return (x2 * pow(z2, P - 2, P) % P).to_bytes(32, "little")


BASE = (9).to_bytes(32, "little")


def tag_oracle(public_key: bytes, n_bits: int) -> int:
    """First n bits of SHA-256 as an integer."""
    return int.from_bytes(hashlib.sha256(public_key).digest(), "big") >> (256 - n_bits) if n_bits else 0


def test_ladder_oracle_matches_published_vector():
    scalar = bytes.fromhex("a546e36bf0527c9d3b16154b82465edd62144c0ac1fc5a18506a2244ba449ac4")
    u = bytes.fromhex("e6db6867583030db3594c1a424b15f7c726624ec26b3353b10a903a6d0ab1c4c")
    assert x25519(scalar, u).hex() == "c3da55379de9c6908e94ea4df28d084f32eccf03491c71f754b4075577a28552"


# -- window keys -------------------------------------------------------------


def test_window_index_boundaries():
    assert crypto.window_index_for(0) == 0
    assert crypto.window_index_for(899.999) == 0
    assert crypto.window_index_for(900) == 1
    assert crypto.window_index_for(1_600_000_200) == 1_777_778
    assert crypto.window_index_for(100, 60) == 1
    with pytest.raises(ValueError):
        crypto.window_index_for(10, 0)
    with pytest.raises(ValueError):
        crypto.window_index_for(-1)


def test_derivation_matches_hkdf_and_ladder_oracle():
    seed = seed_of("oracle")
    for idx in (0, 1, 1_777_778, 2**40):
        kp = crypto.derive_window_keypair(seed, idx)
        scalar = hkdf_sha256(seed.secret, b"wetrace/window-key/v1" + struct.pack("<Q", idx))
        assert kp.public_key == x25519(scalar, BASE)
        assert kp.window_index == idx


def test_derivation_is_deterministic_and_distinct():
    seed = seed_of("a")
    keys = [crypto.derive_window_keypair(seed, i).public_key for i in range(1344)]
    assert keys == [crypto.derive_window_keypair(MasterSeed(seed.secret), i).public_key for i in range(1344)]
    assert len(set(keys)) == 1344
    assert crypto.derive_window_keypair(seed_of("b"), 0).public_key != keys[0]


def test_adjacent_window_keys_look_independent():
    seed = seed_of("bits")
    diffs = []
    for i in range(200):
        a = int.from_bytes(crypto.derive_window_keypair(seed, i).public_key, "big")
        b = int.from_bytes(crypto.derive_window_keypair(seed, i + 1).public_key, "big")
        diffs.append(bin(a ^ b).count("1"))
    mean = sum(diffs) / len(diffs)
    # 256 fair bits: mean 128, sd of the mean ~0.57
    assert 124 < mean < 132


def test_master_seed_validation():
    with pytest.raises(ValueError):
        MasterSeed(b"short")
    with pytest.raises(ValueError):
        crypto.derive_window_keypair(seed_of("x"), -1)
    assert "secret" not in repr(MasterSeed.generate()).replace("secret=", "")
    assert len(MasterSeed.generate().secret) == 32


def test_horizon_indices():
    r = crypto.horizon_window_indices(1344 * 900 + 10, 900, 14 * 24 * 3600)
    assert len(r) == 1344
    assert r[-1] == 1344
    assert len(crypto.horizon_window_indices(10, 900, 14 * 24 * 3600)) == 1


# -- hybrid encryption -------------------------------------------------------


def test_encrypt_matches_reference_construction():
    from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305

    kp = crypto.derive_window_keypair(seed_of("r"), 5)
    eph_secret = hashlib.sha256(b"eph").digest()
    ct = crypto.encrypt_to(kp.public_key, b"hello", eph_secret)
    eph_pub = x25519(eph_secret, BASE)
    shared = x25519(eph_secret, kp.public_key)
    key = hkdf_sha256(shared, b"wetrace/notification/v1" + eph_pub + kp.public_key)
    expected = ChaCha20Poly1305(key).encrypt(bytes(12), b"hello", None)
    assert bytes(ct) == eph_pub + expected


def test_ciphertext_length_and_layout():
    kp = crypto.derive_window_keypair(seed_of("len"), 0)
    ct = crypto.encrypt_to(kp.public_key, bytes(13))
    assert len(ct) == len(bytes(ct)) == 13 + 48 == 61
    assert Ciphertext.from_bytes(bytes(ct)) == ct
    with pytest.raises(ValueError):
        Ciphertext.from_bytes(bytes(47))


def test_wrong_key_and_damage_return_none():
    kp = crypto.derive_window_keypair(seed_of("me"), 0)
    other = crypto.derive_window_keypair(seed_of("me"), 1)
    ct = crypto.encrypt_to(kp.public_key, b"payload")
    assert crypto.try_decrypt(kp, ct) == b"payload"
    assert crypto.try_decrypt(other, ct) is None
    raw = bytes(ct)
    assert crypto.try_decrypt(kp, raw[:-1]) is None
    assert crypto.try_decrypt(kp, raw[:20]) is None
    flipped = raw[:40] + bytes([raw[40] ^ 1]) + raw[41:]
    assert crypto.try_decrypt(kp, flipped) is None
    assert crypto.try_decrypt(kp, bytes(32) + raw[32:]) is None  # low-order ephemeral point


def test_encrypt_rejects_bad_inputs():
    with pytest.raises(ValueError):
        crypto.encrypt_to(bytes(31), b"x")
    with pytest.raises(ValueError):
        crypto.encrypt_to(bytes(32), bytes(crypto.MAX_PLAINTEXT + 1))


def test_fresh_ephemeral_per_message():
    kp = crypto.derive_window_keypair(seed_of("eph"), 0)
    a, b = crypto.encrypt_to(kp.public_key, b"same"), crypto.encrypt_to(kp.public_key, b"same")
    assert a.ephemeral_public != b.ephemeral_public and bytes(a) != bytes(b)


@settings(max_examples=60, deadline=None)
@given(plaintext=st.binary(max_size=2048), idx=st.integers(0, 2**32), seed=st.binary(min_size=32, max_size=32))
def test_round_trip_property(plaintext, idx, seed):
    kp = crypto.derive_window_keypair(MasterSeed(seed), idx)
    ct = crypto.encrypt_to(kp.public_key, plaintext)
    assert len(bytes(ct)) == len(plaintext) + crypto.OVERHEAD
    assert crypto.try_decrypt(kp, bytes(ct)) == plaintext
    assert crypto.try_decrypt(crypto.derive_window_keypair(MasterSeed(seed), idx + 1), ct) is None


# -- prefix tags -------------------------------------------------------------


@settings(max_examples=200)
@given(key=st.binary(min_size=32, max_size=32), n=st.integers(0, 32))
def test_tag_matches_oracle(key, n):
    tag = crypto.key_prefix_tag(key, n)
    assert tag.n_bits == n
    assert len(tag.bits) == (n + 7) // 8
    packed = int.from_bytes(tag.bits, "big") >> ((-n) % 8) if n else 0
    assert packed == tag_oracle(key, n)
    assert tag.matches(key)


def test_tag_validation():
    assert crypto.key_prefix_tag(bytes(32), 0) == PrefixTag(0, b"")
    with pytest.raises(ValueError):
        crypto.key_prefix_tag(bytes(32), 33)
    with pytest.raises(ValueError):
        PrefixTag(1, b"\x01")  # bit beyond the prefix
    with pytest.raises(ValueError):
        PrefixTag(9, b"\x00")
