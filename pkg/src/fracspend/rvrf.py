"""Model ring VRF: unique pseudorandom outputs with signer-hiding signatures.

This is a behavioural stand-in for a real ring-VRF scheme, built for
deterministic simulation rather than cryptographic strength.  It keeps the
three properties the protocol relies on:

* uniqueness: one output per (secret key, seed), recoverable through
  verification no matter how often or over which message the key signs;
* anonymity: signature bytes are salted hash output, identically
  distributed whichever ring member signed, and fixed-size;
* unforgeability: verification answers through a process-local registry
  that only :meth:`RvrfProvider.sign` writes, so bytes never produced by a
  key holder do not verify.

Signing is salted, so one key can emit many distinct signatures for the
same (seed, message, ring); they all verify to the same output, which is
what lets proof verification collapse duplicates.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from typing import Sequence

_SALT_LEN = 16
_TAG_LEN = 32


def digest(*parts: bytes) -> bytes:
    """Collision-resistant 32-byte digest over length-framed parts."""
    h = hashlib.blake2b(digest_size=32)
    for part in parts:
        h.update(len(part).to_bytes(4, "big"))
        h.update(part)
    return h.digest()


class NotInRing(Exception):
    """Signing key's public half is not a member of the supplied ring."""


@dataclass(frozen=True)
class KeyPair:
    sk: bytes
    pk: bytes


def keygen(id_material: bytes) -> KeyPair:
    """Deterministic keypair from identity material (stable across runs)."""
    sk = digest(b"sk", id_material)
    pk = digest(b"pk", sk)
    return KeyPair(sk=sk, pk=pk)


@dataclass(frozen=True)
class RingSignature:
    """Opaque fixed-size signature payload; carries no signer structure."""

    payload: bytes  # salt || tag, 48 bytes

    def serialize(self) -> bytes:
        return self.payload


def ring_digest(ring: Sequence[bytes]) -> bytes:
    """Order-sensitive digest of a ring of public keys."""
    return digest(b"ring", *ring)


class RvrfProvider:
    """Per-run evaluator, signer and verification oracle.

    One instance per simulation run; the registry is the process-local
    verification oracle and must not be shared between runs.
    """

    def __init__(self, max_out: int, salt_seed: int = 0):
        if max_out < 1:
            raise ValueError(f"max_out must be positive, got {max_out}")
        self.max_out = max_out
        self._salt_rng = random.Random(salt_seed)
        # payload bytes -> (ring digest, seed, message digest, out)
        self._registry: dict[bytes, tuple[bytes, bytes, bytes, int]] = {}

    def eval(self, sk: bytes, seed: bytes) -> int:
        """Unique pseudorandom output in [1, max_out] for (sk, seed)."""
        raw = int.from_bytes(digest(b"eval", sk, seed)[:8], "big")
        return 1 + raw % self.max_out

    def sign(self, seed: bytes, message: bytes, ring: Sequence[bytes], sk: bytes) -> RingSignature:
        """Produce a signature binding (seed, message, ring) without naming the signer.

        Raises:
            NotInRing: if sk's public key is not in the ring.
        """
        pk = digest(b"pk", sk)
        if pk not in ring:
            raise NotInRing("public key absent from ring")
        rd = ring_digest(ring)
        salt = self._salt_rng.getrandbits(8 * _SALT_LEN).to_bytes(_SALT_LEN, "big")
        tag = digest(b"tag", sk, seed, message, rd, salt)
        payload = salt + tag
        self._registry[payload] = (rd, seed, digest(b"msg", message), self.eval(sk, seed))
        return RingSignature(payload=payload)

    def verify(self, sig: RingSignature, seed: bytes, message: bytes, ring: Sequence[bytes]) -> tuple[bool, int]:
        """Check a signature against (seed, message, ring).

        Returns (True, out) when the bytes were produced by some ring
        member over exactly this context, else (False, 0).
        """
        record = self._registry.get(sig.payload)
        if record is None:
            return (False, 0)
        rd, rec_seed, rec_msg, out = record
        if rd != ring_digest(ring) or rec_seed != seed or rec_msg != digest(b"msg", message):
            return (False, 0)
        return (True, out)


class KeyStore:
    """Directory of node keypairs plus plain (non-ring) authorization tags.

    Transaction authorization does not need anonymity, only that nobody can
    sign for an uncorrupted node.  Tags are recomputed from the secret key
    held here, which only trusted simulation paths and corrupted-node
    handlers can reach.
    """

    def __init__(self, node_ids: Sequence[str]):
        self._keys = {nid: keygen(nid.encode()) for nid in node_ids}
        self._by_pk = {kp.pk: nid for nid, kp in self._keys.items()}

    def keypair(self, node_id: str) -> KeyPair:
        return self._keys[node_id]

    def pk(self, node_id: str) -> bytes:
        return self._keys[node_id].pk

    def node_for_pk(self, pk: bytes) -> str | None:
        return self._by_pk.get(pk)

    def auth_sign(self, node_id: str, message: bytes) -> bytes:
        return digest(b"auth", self._keys[node_id].sk, message)

    def auth_verify(self, node_id: str, message: bytes, tag: bytes) -> bool:
        if node_id not in self._keys:
            return False
        return digest(b"auth", self._keys[node_id].sk, message) == tag
