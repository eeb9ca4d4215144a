"""Chain, transaction, membership and stake vocabulary.

All types here are immutable values; "mutating" operations return new
instances so replicas can share them read-only.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from types import MappingProxyType
from typing import TYPE_CHECKING, Mapping, Optional

from .digest import ZERO_DIGEST, HashDigest, NodeId, encode_fields, hash_bytes, hash_fields
from .errors import InvalidEvidence, NotAMember
from .leaders import LeaderMode, leader_for

if TYPE_CHECKING:
    from .crypto import IdealCrypto, Signature, ThresholdKeySet

logger = logging.getLogger(__name__)

DEFAULT_MAX_TXS = 64
DEFAULT_STAKE = 100


class TxKind(enum.Enum):
    TRANSFER = "transfer"
    JOIN = "join"
    LEAVE = "leave"


@dataclass(frozen=True)
class Transaction:
    kind: TxKind
    payload: bytes = b""
    node: Optional[NodeId] = None
    public_key: bytes = b""
    deposit: int = 0
    # Transfer semantics are opaque; validity is a flag an adversary may clear.
    valid: bool = True

    def __post_init__(self):
        if self.kind is not TxKind.TRANSFER and (self.node is None or self.node < 0):
            raise ValueError(f"{self.kind.value} transaction needs a node identity")

    @classmethod
    def transfer(cls, payload: bytes, valid: bool = True) -> "Transaction":
        return cls(TxKind.TRANSFER, payload=payload, valid=valid)

    @classmethod
    def join(cls, node: int, public_key: bytes, deposit: int) -> "Transaction":
        return cls(TxKind.JOIN, node=NodeId(node), public_key=public_key, deposit=deposit)

    @classmethod
    def leave(cls, node: int) -> "Transaction":
        return cls(TxKind.LEAVE, node=NodeId(node))

    def encode_fields(self) -> bytes:
        return encode_fields(
            self.kind.value, self.payload, self.node, self.public_key, self.deposit, self.valid
        )


@dataclass(frozen=True)
class BlockRules:
    max_txs: int = DEFAULT_MAX_TXS
    stake: int = DEFAULT_STAKE


@dataclass(frozen=True)
class Block:
    height: int
    parent_hash: HashDigest
    proposer: NodeId
    round: int
    txs: tuple = ()
    evidence: tuple = ()

    def encode_fields(self) -> bytes:
        return encode_fields(
            self.height, self.parent_hash, self.proposer, self.round, self.txs, self.evidence
        )

    @cached_property
    def digest(self) -> HashDigest:
        return hash_block(self)


def hash_block(block: Block) -> HashDigest:
    return hash_bytes(encode_fields("block", block.encode_fields()))


def first_invalid_tx(block: Block, rules: BlockRules) -> Optional[int]:
    """Index of the first offending transaction, or None if the block is valid."""
    for index, tx in enumerate(block.txs):
        if index >= rules.max_txs:
            return index
        if not tx.valid:
            return index
        if tx.kind is TxKind.JOIN and tx.deposit < rules.stake:
            return index
    return None


# ---------- membership ----------


@dataclass(frozen=True)
class ParticipantSet:
    """Epoch membership.

    ``members`` is the ordered tuple of persistent node ids. ``excluded``
    holds nodes slashed during the epoch: their votes are ignored at once,
    while n, f and the quorum stay fixed until the next epoch.
    """

    epoch: int
    members: tuple
    stake_per_member: int = DEFAULT_STAKE
    f_override: Optional[int] = None
    excluded: frozenset = frozenset()

    def __post_init__(self):
        if not self.members:
            raise ValueError("participant set is empty")
        if len(set(self.members)) != len(self.members):
            raise ValueError("participant set has duplicate members")
        if self.f_override is not None and self.f_override > (len(self.members) - 1) // 3:
            raise ValueError("f may only be overridden downward")

    @classmethod
    def genesis(cls, n: int, stake: int = DEFAULT_STAKE, f: Optional[int] = None) -> "ParticipantSet":
        return cls(epoch=0, members=tuple(NodeId(i) for i in range(n)), stake_per_member=stake, f_override=f)

    @property
    def n(self) -> int:
        return len(self.members)

    @property
    def f(self) -> int:
        bound = (self.n - 1) // 3
        return bound if self.f_override is None else min(self.f_override, bound)

    @property
    def quorum(self) -> int:
        return 2 * self.f + 1

    def __contains__(self, node) -> bool:
        return node in self.members

    def index_of(self, node: NodeId) -> int:
        return self.members.index(node)

    def can_vote(self, node: NodeId) -> bool:
        return node in self.members and node not in self.excluded


# ---------- slashing ----------


class EvidenceKind(enum.Enum):
    EQUIVOCATION = "equivocation"
    NON_LEADER_PROPOSAL = "non_leader_proposal"
    INVALID_BLOCK = "invalid_block"


def proposal_digest(height: int, round: int, block_hash: HashDigest) -> HashDigest:
    return hash_fields("proposal", height, round, block_hash)


@dataclass(frozen=True)
class SignedProposal:
    height: int
    round: int
    block_hash: HashDigest
    signature: "Signature"

    def encode_fields(self) -> bytes:
        return encode_fields(self.height, self.round, self.block_hash, self.signature)


@dataclass(frozen=True)
class SlashEvidence:
    """Self-certifying misbehaviour proof."""

    kind: EvidenceKind
    offender: NodeId
    proposals: tuple
    block: Optional[Block] = None
    failing_tx: Optional[int] = None
    leader_seed: Optional[HashDigest] = None
    leader_mode: Optional[LeaderMode] = None

    @property
    def height(self) -> int:
        return self.proposals[0].height

    @property
    def round(self) -> int:
        return self.proposals[0].round

    def encode_fields(self) -> bytes:
        return encode_fields(
            self.kind.value,
            self.offender,
            self.proposals,
            self.block,
            self.failing_tx,
            self.leader_seed,
            self.leader_mode.value if self.leader_mode else None,
        )

    @cached_property
    def fingerprint(self) -> HashDigest:
        return hash_fields("evidence", self.encode_fields())


def verify_evidence(
    evidence: SlashEvidence,
    crypto: "IdealCrypto",
    keys: "ThresholdKeySet",
    participants: ParticipantSet,
    rules: BlockRules = BlockRules(),
) -> bool:
    def signed_by_offender(p: SignedProposal) -> bool:
        return (
            p.signature.signer == evidence.offender
            and p.signature.digest == proposal_digest(p.height, p.round, p.block_hash)
            and crypto.verify(p.signature, keys)
        )

    if not evidence.proposals or not all(signed_by_offender(p) for p in evidence.proposals):
        return False

    if evidence.kind is EvidenceKind.EQUIVOCATION:
        if len(evidence.proposals) != 2:
            return False
        a, b = evidence.proposals
        return (a.height, a.round) == (b.height, b.round) and a.block_hash != b.block_hash

    if evidence.kind is EvidenceKind.NON_LEADER_PROPOSAL:
        if evidence.leader_seed is None or evidence.leader_mode is None:
            return False
        p = evidence.proposals[0]
        expected = leader_for(p.height, p.round, evidence.leader_seed, participants, evidence.leader_mode)
        return expected != evidence.offender

    if evidence.kind is EvidenceKind.INVALID_BLOCK:
        block = evidence.block
        if block is None or block.digest != evidence.proposals[0].block_hash:
            return False
        return first_invalid_tx(block, rules) == evidence.failing_tx and evidence.failing_tx is not None

    return False


@dataclass(frozen=True)
class SlashRecord:
    node: NodeId
    evidence: SlashEvidence
    height: int
    amount: int


@dataclass(frozen=True)
class StakeLedger:
    """Deposits per persistent node id plus the slash history.

    Slashed tokens are burned. ``sum(deposits) + confiscated + withdrawn`` equals
    ``genesis_supply + joined`` throughout a run.
    """

    deposits: Mapping = field(default_factory=lambda: MappingProxyType({}))
    slashed: tuple = ()
    confiscated: int = 0
    withdrawn: int = 0
    joined: int = 0
    genesis_supply: int = 0

    @classmethod
    def genesis(cls, participants: ParticipantSet) -> "StakeLedger":
        deposits = {node: participants.stake_per_member for node in participants.members}
        return cls(deposits=MappingProxyType(deposits), genesis_supply=sum(deposits.values()))

    @property
    def total_supply(self) -> int:
        return sum(self.deposits.values())

    def is_conserved(self) -> bool:
        return self.total_supply + self.confiscated + self.withdrawn == self.genesis_supply + self.joined

    def slashed_nodes(self) -> frozenset:
        return frozenset(record.node for record in self.slashed)

    def deposit(self, node: NodeId, amount: int) -> "StakeLedger":
        deposits = dict(self.deposits)
        deposits[node] = deposits.get(node, 0) + amount
        return replace(self, deposits=MappingProxyType(deposits), joined=self.joined + amount)

    def withdraw(self, node: NodeId) -> "StakeLedger":
        deposits = dict(self.deposits)
        amount = deposits.pop(node, 0)
        return replace(self, deposits=MappingProxyType(deposits), withdrawn=self.withdrawn + amount)


def apply_slash(
    ledger: StakeLedger,
    evidence: SlashEvidence,
    participants: ParticipantSet,
    crypto: "IdealCrypto",
    keys: "ThresholdKeySet",
    height: int,
    rules: BlockRules = BlockRules(),
) -> tuple[StakeLedger, ParticipantSet]:
    """Confiscate the offender's deposit and stop counting its votes.

    Removal from membership happens at the next epoch boundary, where the
    epoch manager drops every node in ``ledger.slashed_nodes()``.
    """
    if evidence.offender not in participants:
        raise NotAMember(f"node {evidence.offender} is not in epoch {participants.epoch}")
    if not verify_evidence(evidence, crypto, keys, participants, rules):
        raise InvalidEvidence(f"{evidence.kind.value} evidence against {evidence.offender} does not verify")
    if evidence.offender in ledger.slashed_nodes():
        return ledger, participants

    deposits = dict(ledger.deposits)
    amount = deposits.get(evidence.offender, 0)
    deposits[evidence.offender] = 0
    record = SlashRecord(node=evidence.offender, evidence=evidence, height=height, amount=amount)
    logger.info(
        "slashed node %s at height %s (%s, %s tokens burned)",
        evidence.offender, height, evidence.kind.value, amount,
    )
    ledger = replace(
        ledger,
        deposits=MappingProxyType(deposits),
        slashed=ledger.slashed + (record,),
        confiscated=ledger.confiscated + amount,
    )
    participants = replace(participants, excluded=participants.excluded | {evidence.offender})
    return ledger, participants


GENESIS_PARENT = ZERO_DIGEST
