"""Pluggable cryptography with a deterministic ideal scheme.

The ideal provider plays the trusted functionality that pairing-based BLS
would otherwise implement. Per-node and group secrets never leave the
provider. A threshold signature over ``d`` is ``H(group_secret ‖ d)`` and only
:meth:`IdealCrypto.combine_threshold` computes it, after counting t+1 distinct
shares that verify. Signatures are unique per (signer, digest), proofs have a
constant size, and forging one requires secrets no caller can see.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Sequence, Union

import numpy as np

from .accounting import SETUP, SizeClass, TransmissionRecord
from .digest import HashDigest, NodeId, encode_fields, hash_bytes, hash_fields
from .errors import DkgFailed, EmptyShares, InsufficientShares, MixedDigests, NoKey

if TYPE_CHECKING:
    from .chain import ParticipantSet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Signature:
    signer: NodeId
    digest: HashDigest
    proof: bytes
    epoch: int = 0
    generation: int = 0

    def encode_fields(self) -> bytes:
        return encode_fields(self.signer, self.digest, self.proof, self.epoch, self.generation)


@dataclass(frozen=True)
class ThresholdSignature:
    """Constant-size aggregate. It carries no signer identities."""

    digest: HashDigest
    epoch: int
    proof: bytes
    generation: int = 0

    def encode_fields(self) -> bytes:
        return encode_fields(self.digest, self.epoch, self.generation, self.proof)

    @property
    def size(self) -> int:
        return len(self.encode_fields())


@dataclass(frozen=True)
class MultiSignature:
    digest: HashDigest
    signer_bitmap: frozenset
    proof: bytes


@dataclass(frozen=True)
class ThresholdKeySet:
    """Outcome of one DKG run for one participant set.

    ``generation`` distinguishes re-runs inside an epoch after a failed DKG.
    ``key_shares`` and ``group_public`` are public handles; the matching
    secrets stay inside the provider.
    """

    epoch: int
    n: int
    t: int
    members: tuple
    key_shares: tuple
    group_public: HashDigest
    valid: bool = True
    generation: int = 0

    def holds(self, node: NodeId) -> bool:
        return node in self.members

    @property
    def quorum(self) -> int:
        return self.t + 1


def dkg_cost(n: int, cost_constant: int = 1) -> int:
    """Modeled transmissions of one DKG run: c·n·⌈log₂n⌉³."""
    log_n = (n - 1).bit_length() if n > 1 else 0
    return cost_constant * n * log_n ** 3


class IdealCrypto:
    """Deterministic ideal scheme keyed by a run-wide master secret."""

    def __init__(self, master_seed: Union[int, bytes]):
        if isinstance(master_seed, int):
            master_seed = master_seed.to_bytes(16, "big", signed=True)
        self._master = hash_fields("master", master_seed).value

    # ---------- hashing ----------

    @staticmethod
    def hash(data: bytes) -> HashDigest:
        return hash_bytes(data)

    # ---------- secrets (private) ----------

    def _share_secret(self, keys: ThresholdKeySet, node: NodeId) -> bytes:
        return hash_fields("share", self._master, keys.epoch, keys.generation, node).value

    def _group_secret(self, keys: ThresholdKeySet) -> bytes:
        return hash_fields("group", self._master, keys.epoch, keys.generation, keys.members).value

    def _expected_proof(self, keys: ThresholdKeySet, node: NodeId, digest: HashDigest) -> bytes:
        return hash_fields(self._share_secret(keys, node), digest).value

    # ---------- individual signatures ----------

    def sign(self, keys: ThresholdKeySet, node: NodeId, digest: HashDigest) -> Signature:
        if not keys.holds(node):
            raise NoKey(f"node {node} holds no share for epoch {keys.epoch}")
        return Signature(
            signer=node,
            digest=digest,
            proof=self._expected_proof(keys, node, digest),
            epoch=keys.epoch,
            generation=keys.generation,
        )

    def verify(self, signature: Signature, keys: ThresholdKeySet) -> bool:
        if not keys.holds(signature.signer):
            return False
        if (signature.epoch, signature.generation) != (keys.epoch, keys.generation):
            return False
        return signature.proof == self._expected_proof(keys, signature.signer, signature.digest)

    def valid_distinct(self, shares: Iterable[Signature], keys: ThresholdKeySet) -> dict:
        """Map signer -> share for the shares that verify, first one per signer."""
        distinct = {}
        for share in shares:
            if share.signer not in distinct and self.verify(share, keys):
                distinct[share.signer] = share
        return distinct

    # ---------- threshold signatures ----------

    def combine_threshold(self, shares: Sequence[Signature], keys: ThresholdKeySet) -> ThresholdSignature:
        digest = _common_digest(shares)
        distinct = self.valid_distinct(shares, keys)
        if len(distinct) <= keys.t:
            raise InsufficientShares(
                f"{len(distinct)} valid shares, need {keys.t + 1} for t={keys.t}"
            )
        if not keys.valid:
            raise DkgFailed(f"keyset for epoch {keys.epoch} gen {keys.generation} is unusable")
        return ThresholdSignature(
            digest=digest,
            epoch=keys.epoch,
            generation=keys.generation,
            proof=hash_fields(self._group_secret(keys), digest).value,
        )

    def verify_threshold(self, ts: ThresholdSignature, digest: HashDigest, keys: ThresholdKeySet) -> bool:
        if not keys.valid or ts.digest != digest:
            return False
        if (ts.epoch, ts.generation) != (keys.epoch, keys.generation):
            return False
        return ts.proof == hash_fields(self._group_secret(keys), digest).value

    # ---------- multi-signatures ----------

    def combine_multi(self, shares: Sequence[Signature]) -> MultiSignature:
        digest = _common_digest(shares)
        ordered = sorted({s.signer: s for s in shares}.values(), key=lambda s: s.signer)
        return MultiSignature(
            digest=digest,
            signer_bitmap=frozenset(s.signer for s in ordered),
            proof=hash_fields("multi", tuple(s.proof for s in ordered)).value,
        )

    def verify_multi(self, ms: MultiSignature, keys: ThresholdKeySet) -> bool:
        if not ms.signer_bitmap or any(not keys.holds(node) for node in ms.signer_bitmap):
            return False
        proofs = tuple(
            self._expected_proof(keys, node, ms.digest) for node in sorted(ms.signer_bitmap)
        )
        return ms.proof == hash_fields("multi", proofs).value

    # ---------- DKG (modeled) ----------

    def run_dkg(
        self,
        participants: "ParticipantSet",
        failure_prob: float,
        rng_seed: int,
        cost_constant: int = 1,
        generation: int = 0,
        height: int = 0,
    ) -> tuple[ThresholdKeySet, TransmissionRecord]:
        rng = np.random.default_rng(rng_seed)
        valid = bool(rng.random() >= failure_prob)
        members = tuple(participants.members)
        draft = ThresholdKeySet(
            epoch=participants.epoch,
            n=participants.n,
            t=2 * participants.f,
            members=members,
            key_shares=(),
            group_public=hash_fields("pending"),
            valid=valid,
            generation=generation,
        )
        keys = ThresholdKeySet(
            epoch=draft.epoch,
            n=draft.n,
            t=draft.t,
            members=members,
            key_shares=tuple(hash_bytes(self._share_secret(draft, node)) for node in members),
            group_public=hash_bytes(self._group_secret(draft)),
            valid=valid,
            generation=generation,
        )
        record = TransmissionRecord(
            height=height,
            round=0,
            msg_kind="dkg",
            size_class=SizeClass.CONSTANT,
            n=participants.n,
            count=dkg_cost(participants.n, cost_constant),
            channel=SETUP,
        )
        if valid:
            logger.debug("DKG epoch %s gen %s: n=%s t=%s ok", keys.epoch, generation, keys.n, keys.t)
        else:
            logger.info("DKG epoch %s gen %s failed; threshold combine disabled", keys.epoch, generation)
        return keys, record


def vrf_output(source: Union[ThresholdSignature, HashDigest, bytes], tag: int) -> HashDigest:
    """H(ts ‖ tag). A seed digest derived from ts may stand in for ts."""
    if isinstance(source, ThresholdSignature):
        material = source.proof
    elif isinstance(source, HashDigest):
        material = source.value
    else:
        material = source
    return hash_fields("vrf", material, tag)


def _common_digest(shares: Sequence[Signature]) -> HashDigest:
    if not shares:
        raise EmptyShares("no shares to combine")
    digests = {share.digest for share in shares}
    if len(digests) != 1:
        raise MixedDigests(f"shares span {len(digests)} digests")
    return next(iter(digests))
