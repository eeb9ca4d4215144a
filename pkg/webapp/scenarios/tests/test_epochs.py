from django.test import SimpleTestCase

from analysis.complexity import amortized_setup_bound, setup_table
from linbft.chain import (
    Block,
    EvidenceKind,
    ParticipantSet,
    SlashEvidence,
    SlashRecord,
    StakeLedger,
    Transaction,
)
from linbft.crypto import IdealCrypto, dkg_cost
from linbft.digest import ZERO_DIGEST
from linbft.epochs import (
    EpochSchedule,
    amortized_setup,
    epoch_transition,
    ingest_finalized_block,
)
from linbft.errors import SetTooSmall


def block_with(*txs):
    return Block(1, ZERO_DIGEST, 0, 1, tuple(txs))


class EpochScheduleTests(SimpleTestCase):
    def test_boundary(self):
        sched = EpochSchedule(epoch_length_blocks=4)
        self.assertEqual([h for h in range(0, 13) if sched.is_boundary(h)], [4, 8, 12])

    def test_latest_request_wins(self):
        sched = EpochSchedule(4)
        sched = ingest_finalized_block(sched, block_with(Transaction.join(5, b"pk", 100)))
        sched = ingest_finalized_block(sched, block_with(Transaction.leave(5), Transaction.leave(2)))
        self.assertEqual(sched.pending_joins, ())
        self.assertEqual(sched.pending_leaves, (5, 2))

    def test_transfers_are_ignored(self):
        sched = EpochSchedule(4)
        self.assertIs(ingest_finalized_block(sched, block_with(Transaction.transfer(b"t"))), sched)


class EpochTransitionTests(SimpleTestCase):
    def setUp(self):
        self.participants = ParticipantSet.genesis(4)
        self.ledger = StakeLedger.genesis(self.participants)
        self.crypto = IdealCrypto(2)

    def transition(self, *txs):
        sched = ingest_finalized_block(EpochSchedule(4), block_with(*txs))
        return epoch_transition(sched, self.participants, self.ledger, 99, self.crypto, height=4)

    def test_join_and_leave(self):
        result = self.transition(Transaction.join(7, b"pk", 100), Transaction.leave(1))
        self.assertEqual(result.participants.members, (0, 2, 3, 7))
        self.assertEqual(result.participants.epoch, 1)
        self.assertEqual(result.keys.members, (0, 2, 3, 7))
        self.assertEqual(result.ledger.deposits[7], 100)
        self.assertNotIn(1, result.ledger.deposits)
        self.assertTrue(result.ledger.is_conserved())
        self.assertEqual(result.schedule.requests, ())

    def test_transition_costs(self):
        result = self.transition(Transaction.join(7, b"pk", 100))
        self.assertEqual(result.participants.n, 5)
        self.assertEqual(result.dkg_record.units, dkg_cost(5))
        self.assertEqual(result.exchange_record.units, 5 * 4)
        self.assertEqual(result.participants.quorum, 3)

    def test_set_below_four_is_rejected(self):
        with self.assertRaises(SetTooSmall):
            self.transition(Transaction.leave(1))

    def test_unchanged_small_set_rotates_keys(self):
        small = ParticipantSet.genesis(3)
        result = epoch_transition(
            EpochSchedule(3), small, StakeLedger.genesis(small), 5, self.crypto, height=3
        )
        self.assertEqual(result.participants.members, (0, 1, 2))
        self.assertEqual(result.keys.epoch, 1)

    def test_slashed_nodes_are_dropped(self):
        record = SlashRecord(node=2, evidence=SlashEvidence(EvidenceKind.EQUIVOCATION, 2, ()), height=1, amount=100)
        self.ledger = StakeLedger(
            deposits=self.ledger.deposits, slashed=(record,), genesis_supply=400, confiscated=0,
        )
        result = self.transition(Transaction.join(7, b"pk", 100))
        self.assertNotIn(2, result.participants.members)


class AmortizedSetupTests(SimpleTestCase):
    def test_values(self):
        self.assertEqual(amortized_setup(16, 64), (1024 + 240) / 64)
        self.assertEqual(amortized_setup_bound(16), 32)

    def test_polylog_bound_across_sweep(self):
        table = setup_table([4, 16, 64, 256])
        self.assertTrue(table["within_bound"].all(), table.to_string())
        self.assertEqual(list(table["epoch_length"]), [16, 64, 256, 1024])
