import hashlib
import hmac

import numpy as np
import pytest

from jamlab.keystream import KeystreamSeed

KEY = bytes(range(16))


def test_block_is_hmac_sha256():
    seed = KeystreamSeed(KEY)
    want = hmac.new(KEY, b"label\x003\x000", hashlib.sha256).digest()
    assert seed.take("label", 3, 32) == want


def test_take_spans_blocks():
    seed = KeystreamSeed(KEY)
    long = seed.take("x", 0, 80)
    assert len(long) == 80 and long[:32] == seed.take("x", 0, 32)
    assert long[32:64] == hmac.new(KEY, b"x\x000\x001", hashlib.sha256).digest()


def test_bits_unpack_big_endian():
    seed = KeystreamSeed(KEY)
    first = seed.take("b", 0, 1)[0]
    assert seed.bits("b", 0, 8).tolist() == [(first >> (7 - i)) & 1 for i in range(8)]


def test_hex_round_trip_and_stretching():
    seed = KeystreamSeed.from_hex(KEY.hex())
    assert seed == KeystreamSeed(KEY) and seed.hex() == KEY.hex()
    short = KeystreamSeed.from_hex("5eed")
    assert short == KeystreamSeed.from_hex("0x5EED")
    assert short != KeystreamSeed.from_hex("5eee")


def test_seed_length_is_fixed():
    with pytest.raises(ValueError):
        KeystreamSeed(b"short")


def test_repr_hides_secret():
    seed = KeystreamSeed(KEY)
    assert KEY.hex() not in repr(seed) and "redacted" in repr(seed)


def test_derived_seeds_are_independent_and_stable():
    seed = KeystreamSeed(KEY)
    assert seed.derive("a") == seed.derive("a")
    assert seed.derive("a") != seed.derive("b")
    assert seed.derive("a") != seed


def test_bits_are_balanced():
    seed = KeystreamSeed(KEY)
    bits = np.concatenate([seed.bits("bal", i, 64) for i in range(500)])
    n = bits.size
    assert abs(bits.mean() - 0.5) <= 3 * 0.5 / np.sqrt(n)


def test_generated_seeds_differ():
    assert KeystreamSeed.generate() != KeystreamSeed.generate()
