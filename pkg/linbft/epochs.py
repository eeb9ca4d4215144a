"""Epoch bookkeeping: membership requests, transitions and key rotation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

from .accounting import SETUP, SizeClass, TransmissionRecord
from .chain import Block, ParticipantSet, StakeLedger, TxKind
from .crypto import IdealCrypto, ThresholdKeySet, dkg_cost
from .digest import NodeId, hash_fields
from .errors import SetTooSmall

logger = logging.getLogger(__name__)

MIN_DYNAMIC_SET = 4


@dataclass(frozen=True)
class EpochSchedule:
    """Pending membership requests for the running epoch.

    ``requests`` keeps the latest Join or Leave per node, in the order the
    latest requests were finalized.
    """

    epoch_length_blocks: int
    current_epoch: int = 0
    requests: tuple = ()

    @property
    def pending_joins(self) -> tuple:
        return tuple(node for node, tx in self.requests if tx.kind is TxKind.JOIN)

    @property
    def pending_leaves(self) -> tuple:
        return tuple(node for node, tx in self.requests if tx.kind is TxKind.LEAVE)

    def request_of(self, node: NodeId):
        for who, tx in self.requests:
            if who == node:
                return tx
        return None

    def is_boundary(self, height: int) -> bool:
        return height > 0 and height % self.epoch_length_blocks == 0


def ingest_finalized_block(sched: EpochSchedule, block: Block) -> EpochSchedule:
    membership = [tx for tx in block.txs if tx.kind is not TxKind.TRANSFER]
    if not membership:
        return sched
    latest = dict(sched.requests)
    for tx in membership:
        # Re-insert so dict order follows the latest request.
        latest.pop(tx.node, None)
        latest[tx.node] = tx
    return replace(sched, requests=tuple(latest.items()))


@dataclass(frozen=True)
class EpochTransition:
    participants: ParticipantSet
    keys: ThresholdKeySet
    dkg_record: TransmissionRecord
    exchange_record: TransmissionRecord
    ledger: StakeLedger
    schedule: EpochSchedule

    @property
    def records(self) -> tuple:
        return (self.dkg_record, self.exchange_record)


def dkg_seed(run_seed: int, epoch: int, generation: int) -> int:
    return hash_fields("dkg", run_seed, epoch, generation).as_int() >> 192


def epoch_transition(
    sched: EpochSchedule,
    participants: ParticipantSet,
    ledger: StakeLedger,
    rng_seed: int,
    crypto: IdealCrypto,
    dkg_failure_prob: float = 0.0,
    dkg_cost_constant: int = 1,
    height: int = 0,
) -> EpochTransition:
    slashed = ledger.slashed_nodes()
    members = []
    for node in participants.members:
        request = sched.request_of(node)
        if node in slashed:
            continue
        if request is not None and request.kind is TxKind.LEAVE:
            ledger = ledger.withdraw(node)
            continue
        members.append(node)
    for node, tx in sched.requests:
        if tx.kind is TxKind.JOIN and node not in members and node not in slashed:
            members.append(node)
            ledger = ledger.deposit(node, tx.deposit)

    members.sort()
    changed = tuple(members) != tuple(participants.members)
    if changed and len(members) < MIN_DYNAMIC_SET:
        raise SetTooSmall(f"epoch {participants.epoch + 1} would have {len(members)} members")
    if not members:
        raise SetTooSmall(f"epoch {participants.epoch + 1} would be empty")

    f_override = participants.f_override
    if f_override is not None:
        f_override = min(f_override, (len(members) - 1) // 3)
    next_set = ParticipantSet(
        epoch=participants.epoch + 1,
        members=tuple(members),
        stake_per_member=participants.stake_per_member,
        f_override=f_override,
    )
    keys, dkg_record = crypto.run_dkg(
        next_set, dkg_failure_prob, rng_seed, dkg_cost_constant, generation=0, height=height
    )
    n = next_set.n
    exchange = TransmissionRecord(
        height=height, round=0, msg_kind="key_exchange", size_class=SizeClass.CONSTANT,
        n=n, count=n * (n - 1), channel=SETUP,
    )
    logger.info(
        "epoch %s -> %s at height %s: n %s -> %s, t=%s, keys %s",
        participants.epoch, next_set.epoch, height, participants.n, n, keys.t,
        "valid" if keys.valid else "FAILED",
    )
    return EpochTransition(
        participants=next_set,
        keys=keys,
        dkg_record=dkg_record,
        exchange_record=exchange,
        ledger=ledger,
        schedule=EpochSchedule(sched.epoch_length_blocks, next_set.epoch),
    )


def amortized_setup(n: int, epoch_length: int, cost_constant: int = 1) -> float:
    """(DKG cost + pairwise key exchange) spread over one epoch."""
    return (dkg_cost(n, cost_constant) + n * (n - 1)) / epoch_length
