"""Synthetic transaction source shared by every leader."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .chain import Transaction, TxKind
from .digest import hash_fields


@dataclass(frozen=True)
class Mempool:
    """Transfers generated per height plus scheduled Join/Leave requests.

    ``scheduled`` holds ``(height, Transaction)`` pairs. A scheduled request is
    offered from its height on until a finalized block has included it.
    """

    seed: int = 0
    txs_per_block: int = 4
    scheduled: tuple = ()

    def __post_init__(self):
        # Tag each scheduled request so two identical requests stay distinct.
        tagged = tuple(
            (height, replace(tx, payload=b"sched:%d" % index))
            for index, (height, tx) in enumerate(self.scheduled)
        )
        object.__setattr__(self, "scheduled", tagged)

    def candidates(self, height: int, included=frozenset()) -> list:
        membership = [
            tx for at, tx in self.scheduled
            if at <= height and tx not in included
        ]
        transfers = [
            Transaction.transfer(hash_fields("transfer", self.seed, height, i).value)
            for i in range(self.txs_per_block)
        ]
        return membership + transfers

    @staticmethod
    def tracks(tx: Transaction) -> bool:
        return tx.kind is not TxKind.TRANSFER
