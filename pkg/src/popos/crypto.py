"""Hashing, Ed25519 signatures and an epoch-scoped secret key registry.

Signing goes through libsodium (via PyNaCl) because trace generation at
committee size 512 signs millions of messages.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from nacl import bindings as _sodium
from nacl.exceptions import BadSignatureError

HASH_SIZE = 32
PK_SIZE = 32
SK_SIZE = 64
SIG_SIZE = 64

Digest = bytes


def hash_bytes(data: bytes) -> Digest:
    """SHA-256 of ``data``."""
    return hashlib.sha256(data).digest()


@dataclass(frozen=True)
class KeyPair:
    pk: bytes
    sk: bytes = field(repr=False)


def keygen(seed: bytes) -> KeyPair:
    if len(seed) != 32:
        raise ValueError("keygen seed must be 32 bytes")
    pk, sk = _sodium.crypto_sign_seed_keypair(seed)
    return KeyPair(pk, sk)


def sign(sk: bytes, message: bytes) -> bytes:
    return _sodium.crypto_sign(message, sk)[:SIG_SIZE]


def verify(pk: bytes, message: bytes, sig: bytes) -> bool:
    """Return True iff ``sig`` is a valid signature by ``pk`` on ``message``.

    Malformed keys or signatures are rejected rather than raised.
    """
    if len(pk) != PK_SIZE or len(sig) != SIG_SIZE:
        return False
    try:
        _sodium.crypto_sign_open(sig + message, pk)
    except (BadSignatureError, ValueError, TypeError):
        return False
    return True


class KeyUnavailable(KeyError):
    """The secret key was never registered or has been destroyed."""


class EpochKeyRegistry:
    """Secret keys indexed by ``(epoch, member)``.

    Advancing to epoch ``e`` destroys every key registered for an earlier
    epoch, which is how the simulator stands in for key-evolving signatures.
    """

    def __init__(self, epoch: int = 0):
        self.epoch = epoch
        self._keys: dict[tuple[int, int], bytes] = {}

    def register(self, epoch: int, member: int, sk: bytes) -> None:
        if epoch < self.epoch:
            raise ValueError(f"epoch {epoch} already erased (current {self.epoch})")
        self._keys[(epoch, member)] = sk

    def get(self, epoch: int, member: int) -> bytes:
        try:
            return self._keys[(epoch, member)]
        except KeyError:
            raise KeyUnavailable((epoch, member)) from None

    def has(self, epoch: int, member: int) -> bool:
        return (epoch, member) in self._keys

    def advance(self, to_epoch: int) -> EpochKeyRegistry:
        if to_epoch < self.epoch:
            raise ValueError(f"cannot rewind registry from {self.epoch} to {to_epoch}")
        for key in [k for k in self._keys if k[0] < to_epoch]:
            del self._keys[key]
        self.epoch = to_epoch
        return self

    def __len__(self) -> int:
        return len(self._keys)


def registry_advance(reg: EpochKeyRegistry, to_epoch: int) -> EpochKeyRegistry:
    return reg.advance(to_epoch)
