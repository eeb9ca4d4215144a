"""Wire messages and certificates.

A certificate is backed either by a threshold signature (constant size) or,
after a failed DKG, by the raw 2f+1 shares it was built from (linear size).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property
from typing import ClassVar, Optional

from .accounting import BODY, CATCHUP, CONSENSUS, SizeClass
from .chain import Block, SignedProposal, proposal_digest
from .crypto import MultiSignature, Signature, ThresholdSignature
from .digest import HashDigest, NodeId, hash_fields


def cc_digest(height: int, round: int, block_hash: HashDigest) -> HashDigest:
    return hash_fields("cc", height, round, block_hash)


def new_view_digest(height: int, round: int) -> HashDigest:
    return hash_fields("new-view", height, round)


@dataclass(frozen=True)
class CommitCert:
    """⟨round, block hash, ts(block hash)⟩ at one height."""

    height: int
    round: int
    block_hash: HashDigest
    ts: Optional[ThresholdSignature] = None
    shares: tuple = ()

    @property
    def fallback(self) -> bool:
        return self.ts is None

    @cached_property
    def digest(self) -> HashDigest:
        return cc_digest(self.height, self.round, self.block_hash)

    @property
    def size_class(self) -> SizeClass:
        return SizeClass.LINEAR if self.fallback else SizeClass.CONSTANT


@dataclass(frozen=True)
class ViewCert:
    """Aggregated NewViews proving 2f+1 replicas left the previous round."""

    height: int
    round: int
    ts: Optional[ThresholdSignature] = None
    shares: tuple = ()

    @property
    def digest(self) -> HashDigest:
        return new_view_digest(self.height, self.round)

    @property
    def size_class(self) -> SizeClass:
        return SizeClass.LINEAR if self.ts is None else SizeClass.CONSTANT


class Stage(enum.Enum):
    PREPARE = "prepare"
    COMMIT = "commit"


def _widest(*classes) -> SizeClass:
    return SizeClass.LINEAR if SizeClass.LINEAR in classes else SizeClass.CONSTANT


@dataclass(frozen=True)
class Message:
    kind: ClassVar[str] = "message"
    channel: ClassVar[str] = CONSENSUS

    sender: NodeId
    height: int

    @property
    def round(self) -> int:
        return 0

    @property
    def size_class(self) -> SizeClass:
        return SizeClass.CONSTANT


@dataclass(frozen=True)
class Preprepare(Message):
    kind: ClassVar[str] = "preprepare"

    msg_round: int
    block: Block
    signature: Signature
    highest_cc: Optional[CommitCert] = None
    view_cert: Optional[ViewCert] = None

    @property
    def round(self) -> int:
        return self.msg_round

    @property
    def proposal(self) -> SignedProposal:
        return SignedProposal(self.height, self.msg_round, self.block.digest, self.signature)

    @property
    def size_class(self) -> SizeClass:
        return _widest(
            self.highest_cc.size_class if self.highest_cc else SizeClass.CONSTANT,
            self.view_cert.size_class if self.view_cert else SizeClass.CONSTANT,
        )


@dataclass(frozen=True)
class PrepareVote(Message):
    kind: ClassVar[str] = "prepare_vote"

    msg_round: int
    block_hash: HashDigest
    share: Signature
    evidence: tuple = ()

    @property
    def round(self) -> int:
        return self.msg_round


@dataclass(frozen=True)
class CCBroadcast(Message):
    kind: ClassVar[str] = "cc"

    cc: CommitCert

    @property
    def round(self) -> int:
        return self.cc.round

    @property
    def size_class(self) -> SizeClass:
        return self.cc.size_class


@dataclass(frozen=True)
class CommitVote(Message):
    kind: ClassVar[str] = "commit_vote"

    msg_round: int
    cc_hash: HashDigest
    share: Signature

    @property
    def round(self) -> int:
        return self.msg_round


@dataclass(frozen=True)
class FinalizeBroadcast(Message):
    kind: ClassVar[str] = "finalize"

    cc: CommitCert
    ts_cc: ThresholdSignature

    @property
    def round(self) -> int:
        return self.cc.round


@dataclass(frozen=True)
class NewView(Message):
    kind: ClassVar[str] = "new_view"

    new_round: int
    share: Signature
    locked_cc: Optional[CommitCert] = None
    evidence: tuple = ()

    @property
    def round(self) -> int:
        return self.new_round

    @property
    def size_class(self) -> SizeClass:
        return self.locked_cc.size_class if self.locked_cc else SizeClass.CONSTANT


@dataclass(frozen=True)
class FallbackBroadcast(Message):
    """Raw 2f+1 shares broadcast when they cannot be aggregated."""

    kind: ClassVar[str] = "fallback"

    msg_round: int
    stage: Stage
    digest: HashDigest
    shares: tuple
    cc: Optional[CommitCert] = None

    @property
    def round(self) -> int:
        return self.msg_round

    @property
    def size_class(self) -> SizeClass:
        return SizeClass.LINEAR


@dataclass(frozen=True)
class BlockRequest(Message):
    kind: ClassVar[str] = "block_request"
    channel: ClassVar[str] = BODY

    block_hash: HashDigest


@dataclass(frozen=True)
class BlockBody(Message):
    kind: ClassVar[str] = "block_body"
    channel: ClassVar[str] = BODY

    block: Block


@dataclass(frozen=True)
class FinalityProof:
    cc: CommitCert
    ts_cc: Optional[ThresholdSignature] = None
    commit_shares: tuple = ()
    ms_cc: Optional[MultiSignature] = None

    @property
    def fallback(self) -> bool:
        return self.ts_cc is None

    @property
    def size_class(self) -> SizeClass:
        return _widest(self.cc.size_class, SizeClass.LINEAR if self.fallback else SizeClass.CONSTANT)


@dataclass(frozen=True)
class Decision(Message):
    """Catch-up answer: a finalized block with its proof."""

    kind: ClassVar[str] = "decision"
    channel: ClassVar[str] = CATCHUP

    block: Block
    proof: FinalityProof

    @property
    def size_class(self) -> SizeClass:
        return self.proof.size_class


@dataclass(frozen=True)
class CosiFinalize(Message):
    """Down-pass of a successful speculative run."""

    kind: ClassVar[str] = "cosi_finalize"

    block: Block
    proof: FinalityProof

    @property
    def round(self) -> int:
        return self.proof.cc.round


__all__ = [
    "BlockBody",
    "BlockRequest",
    "CCBroadcast",
    "CommitCert",
    "CommitVote",
    "CosiFinalize",
    "Decision",
    "FallbackBroadcast",
    "FinalityProof",
    "FinalizeBroadcast",
    "Message",
    "NewView",
    "Preprepare",
    "PrepareVote",
    "Stage",
    "ViewCert",
    "cc_digest",
    "new_view_digest",
    "proposal_digest",
]
