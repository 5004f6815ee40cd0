"""Secret quorums: hidden self-selected validator subsets with proofs.

For a payment serialized as bytes ``d``, everyone can recompute the same
ordered list of ``V`` candidate validators by iterated hashing over the
validator roster.  Which candidates actually validate is decided by each
candidate privately: it evaluates its VRF on a seed bound to ``d`` and a
client nonce, and participates only if the output clears the configured
threshold.  Candidates reply with ring signatures over the candidate ring,
so a reply proves membership and selection without naming the signer.

A proof is the collected signatures plus the nonce.  Verification counts
distinct VRF outputs at or below the threshold; duplicates from one key
collapse because the output, not the signature bytes, is what is counted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .params import SystemConfig, vrf_threshold
from .rvrf import KeyPair, RingSignature, RvrfProvider, digest


@dataclass(frozen=True)
class CandidateSet:
    """Ordered candidate roster for one payment; order is the ring order."""

    members: tuple[bytes, ...]   # public keys in collection order
    source: bytes                # digest of the payment bytes they derive from


@dataclass(frozen=True)
class ValidationProof:
    signatures: tuple[RingSignature, ...]
    nonce: bytes


def select_candidates(d: bytes, validators: Sequence[bytes], V: int) -> CandidateSet:
    """Derive the V-member candidate list for payment bytes ``d``.

    Iterates ``index_j = H(H(d) || j) mod n`` and appends previously unseen
    validators until V are collected; every party recomputes the same list
    in the same order.
    """
    n = len(validators)
    if not 1 <= V <= n:
        raise ValueError(f"need 1 <= V <= {n}, got V={V}")
    base = digest(b"cand", d)
    members: list[bytes] = []
    seen: set[int] = set()
    j = 0
    while len(members) < V:
        j += 1
        idx = int.from_bytes(digest(base, j.to_bytes(8, "big"))[:8], "big") % n
        if idx not in seen:
            seen.add(idx)
            members.append(validators[idx])
    return CandidateSet(members=tuple(members), source=digest(b"src", d))


def validation_seed(d: bytes, nonce: bytes) -> bytes:
    """VRF seed binding a payment to one client validation attempt."""
    return digest(b"seed", d, nonce)


def selected_by_vrf(
    d: bytes,
    nonce: bytes,
    keypair: KeyPair,
    cfg: SystemConfig,
    provider: RvrfProvider,
    candidates: CandidateSet,
) -> bool:
    """Whether this validator privately self-selects for (d, nonce)."""
    if keypair.pk not in candidates.members:
        return False
    out = provider.eval(keypair.sk, validation_seed(d, nonce))
    return out <= vrf_threshold(cfg)

def make_ring_signature(
    d: bytes,
    nonce: bytes,
    keypair: KeyPair,
    candidates: CandidateSet,
    provider: RvrfProvider,
) -> RingSignature:
    """Sign ``d`` over the candidate ring without revealing which member."""
    return provider.sign(validation_seed(d, nonce), d, candidates.members, keypair.sk)


def verify_proof(
    proof: ValidationProof,
    d: bytes,
    cfg: SystemConfig,
    provider: RvrfProvider,
    candidates: CandidateSet,
) -> bool:
    """True iff the proof carries >= q signatures from distinct selected members.

    Distinctness is judged on VRF outputs, so any number of signatures from
    one key adds at most one; outputs above the threshold add nothing.
    Malformed or transplanted signatures simply fail verification.
    """
    seed = validation_seed(d, proof.nonce)
    threshold = vrf_threshold(cfg)
    outs: set[int] = set()
    for sig in proof.signatures:
        ok, out = provider.verify(sig, seed, d, candidates.members)
        if ok and out <= threshold:
            outs.add(out)
    return len(outs) >= cfg.q


class CandidateIndex:
    """Memoized candidate derivation over a fixed validator roster."""

    def __init__(self, validators: Sequence[bytes], V: int):
        self.validators = tuple(validators)
        self.V = V
        self._cache: dict[bytes, CandidateSet] = {}

    def for_data(self, d: bytes) -> CandidateSet:
        got = self._cache.get(d)
        if got is None:
            got = select_candidates(d, self.validators, self.V)
            self._cache[d] = got
        return got


@dataclass
class ValidationSession:
    """Client-side collection state for one in-flight validation.

    Feed signatures as they arrive; the session completes the first time it
    holds at least ``w`` of them and they verify as a proof.  At event-queue
    quiescence the caller invokes :meth:`finish`; a session that never
    completed yields no proof (the validation failed).
    """

    d: bytes
    nonce: bytes
    cfg: SystemConfig
    candidates: CandidateSet
    provider: RvrfProvider
    signatures: list[RingSignature] = field(default_factory=list)
    proof: ValidationProof | None = None
    _payloads: set[bytes] = field(default_factory=set)

    def on_signature(self, sig: RingSignature) -> ValidationProof | None:
        """Absorb one signature; returns the proof on the completing one."""
        if self.proof is not None:
            return None
        if sig.payload in self._payloads:
            return None
        self._payloads.add(sig.payload)
        self.signatures.append(sig)
        if len(self.signatures) >= self.cfg.w:
            return self._attempt()
        return None

    def finish(self) -> ValidationProof | None:
        """Final state at quiescence: the proof, or None for failure."""
        if self.proof is None and len(self.signatures) >= self.cfg.w:
            self._attempt()
        return self.proof

    def _attempt(self) -> ValidationProof | None:
        cand = ValidationProof(signatures=tuple(self.signatures), nonce=self.nonce)
        if verify_proof(cand, self.d, self.cfg, self.provider, self.candidates):
            self.proof = cand
            return cand
        return None
