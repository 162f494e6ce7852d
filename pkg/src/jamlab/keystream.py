"""Seeded keystream used wherever a secret pseudorandom function is needed.

HMAC-SHA256 keyed by the secret, evaluated on ``(label, index, block)``.
This is a deterministic stand-in for a PRF; nothing here is a security claim.
"""

from __future__ import annotations

import hashlib
import hmac
import secrets

import numpy as np

SEED_BYTES = 16


class KeystreamSeed:
    """Fixed-length secret (128 bits by default) driving pseudorandom choices.

    The secret bytes are deliberately kept out of ``repr`` so they do not leak
    into logs or experiment outputs.
    """

    __slots__ = ("_key",)

    def __init__(self, key: bytes):
        if not isinstance(key, (bytes, bytearray)) or len(key) != SEED_BYTES:
            raise ValueError(f"keystream seed must be exactly {SEED_BYTES} bytes")
        self._key = bytes(key)

    @classmethod
    def from_hex(cls, text: str) -> "KeystreamSeed":
        text = text.strip().lower().removeprefix("0x")
        raw = bytes.fromhex(text)
        if len(raw) != SEED_BYTES:
            # shorter or longer hex is stretched/compressed to the fixed length
            raw = hashlib.sha256(b"keystream-seed\x00" + raw).digest()[:SEED_BYTES]
        return cls(raw)

    @classmethod
    def generate(cls) -> "KeystreamSeed":
        return cls(secrets.token_bytes(SEED_BYTES))

    def hex(self) -> str:
        return self._key.hex()

    def derive(self, label: str) -> "KeystreamSeed":
        """Child seed for an independent game or task."""
        return KeystreamSeed(self._block(f"derive:{label}", 0, 0)[:SEED_BYTES])

    def _block(self, label: str, index: int, block: int) -> bytes:
        msg = f"{label}\x00{int(index)}\x00{int(block)}".encode()
        return hmac.new(self._key, msg, hashlib.sha256).digest()

    def take(self, label: str, index: int, n: int) -> bytes:
        out = bytearray()
        block = 0
        while len(out) < n:
            out += self._block(label, index, block)
            block += 1
        return bytes(out[:n])

    def bits(self, label: str, index: int, n: int) -> np.ndarray:
        """First ``n`` keystream bits for ``(label, index)`` as a uint8 array."""
        raw = np.frombuffer(self.take(label, index, (n + 7) // 8), dtype=np.uint8)
        return np.unpackbits(raw)[:n]

    def integer(self, label: str, index: int = 0) -> int:
        """256-bit integer from the keystream, e.g. to seed a numpy generator."""
        return int.from_bytes(self._block(label, index, 0), "big")

    def __eq__(self, other: object) -> bool:
        return isinstance(other, KeystreamSeed) and hmac.compare_digest(self._key, other._key)

    def __hash__(self) -> int:
        return hash(self._key)

    def __repr__(self) -> str:
        return "KeystreamSeed(<redacted>)"
