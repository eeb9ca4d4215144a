import numpy as np
from django.test import SimpleTestCase

from linbft.chain import (
    Block,
    BlockRules,
    EvidenceKind,
    ParticipantSet,
    SignedProposal,
    SlashEvidence,
    StakeLedger,
    Transaction,
    apply_slash,
    first_invalid_tx,
    hash_block,
    proposal_digest,
    verify_evidence,
)
from linbft.crypto import IdealCrypto
from linbft.digest import ZERO_DIGEST, HashDigest, encode_fields, hash_fields
from linbft.errors import InvalidEvidence, NotAMember
from linbft.leaders import LeaderMode, leader_for


def signed(crypto, keys, node, height, round, block_hash):
    sig = crypto.sign(keys, node, proposal_digest(height, round, block_hash))
    return SignedProposal(height, round, block_hash, sig)


class DigestTests(SimpleTestCase):
    def test_encoding_is_length_prefixed(self):
        self.assertNotEqual(encode_fields("ab", "c"), encode_fields("a", "bc"))

    def test_digest_rejects_wrong_length(self):
        with self.assertRaises(ValueError):
            HashDigest(b"short")

    def test_hex_round_trip(self):
        digest = hash_fields("x", 1)
        self.assertEqual(HashDigest.from_hex(digest.hex()), digest)


class BlockTests(SimpleTestCase):
    def test_no_collisions_over_random_blocks(self):
        rng = np.random.default_rng(2024)
        blocks = {
            Block(
                int(rng.integers(1, 1000)),
                ZERO_DIGEST,
                int(rng.integers(0, 256)),
                int(rng.integers(1, 8)),
                (Transaction.transfer(rng.bytes(int(rng.integers(0, 16)))),),
            )
            for _ in range(10_000)
        }
        digests = {hash_block(b) for b in blocks}
        self.assertEqual(len(digests), len(blocks))
        self.assertGreater(len(blocks), 9_900)

    def test_digest_covers_every_field(self):
        block = Block(1, ZERO_DIGEST, 0, 1, (Transaction.transfer(b"a"),))
        self.assertEqual(block.digest, Block(1, ZERO_DIGEST, 0, 1, (Transaction.transfer(b"a"),)).digest)
        self.assertNotEqual(block.digest, Block(1, ZERO_DIGEST, 0, 2, (Transaction.transfer(b"a"),)).digest)
        self.assertNotEqual(block.digest, Block(1, ZERO_DIGEST, 1, 1, (Transaction.transfer(b"a"),)).digest)

    def test_first_invalid_tx(self):
        rules = BlockRules(max_txs=2, stake=100)
        good = Transaction.transfer(b"ok")
        self.assertIsNone(first_invalid_tx(Block(1, ZERO_DIGEST, 0, 1, (good,)), rules))
        bad = Transaction.transfer(b"bad", valid=False)
        self.assertEqual(first_invalid_tx(Block(1, ZERO_DIGEST, 0, 1, (good, bad)), rules), 1)
        cheap_join = Transaction.join(9, b"pk", 10)
        self.assertEqual(first_invalid_tx(Block(1, ZERO_DIGEST, 0, 1, (cheap_join,)), rules), 0)
        self.assertEqual(first_invalid_tx(Block(1, ZERO_DIGEST, 0, 1, (good, good, good)), rules), 2)

    def test_membership_tx_needs_node(self):
        with self.assertRaises(ValueError):
            Transaction.leave(-1)


class ParticipantSetTests(SimpleTestCase):
    def test_quorum_is_two_f_plus_one(self):
        for n, f in [(1, 0), (4, 1), (7, 2), (16, 5), (64, 21)]:
            participants = ParticipantSet.genesis(n)
            self.assertEqual(participants.f, f)
            self.assertEqual(participants.quorum, 2 * f + 1)

    def test_f_override_only_downward(self):
        self.assertEqual(ParticipantSet.genesis(7, f=1).quorum, 3)
        with self.assertRaises(ValueError):
            ParticipantSet.genesis(7, f=3)

    def test_duplicates_rejected(self):
        with self.assertRaises(ValueError):
            ParticipantSet(epoch=0, members=(0, 0, 1))


class SlashingTests(SimpleTestCase):
    def setUp(self):
        self.participants = ParticipantSet.genesis(4)
        self.crypto = IdealCrypto(7)
        self.keys, _ = self.crypto.run_dkg(self.participants, 0.0, 1)
        a, b = hash_fields("block-a"), hash_fields("block-b")
        pair = (signed(self.crypto, self.keys, 2, 5, 1, a), signed(self.crypto, self.keys, 2, 5, 1, b))
        self.equivocation = SlashEvidence(EvidenceKind.EQUIVOCATION, 2, pair)

    def test_equivocation_verifies(self):
        self.assertTrue(verify_evidence(self.equivocation, self.crypto, self.keys, self.participants))

    def test_same_block_twice_is_not_equivocation(self):
        a = hash_fields("block-a")
        pair = (signed(self.crypto, self.keys, 2, 5, 1, a),) * 2
        evidence = SlashEvidence(EvidenceKind.EQUIVOCATION, 2, pair)
        self.assertFalse(verify_evidence(evidence, self.crypto, self.keys, self.participants))

    def test_evidence_signed_by_someone_else_fails(self):
        a, b = hash_fields("block-a"), hash_fields("block-b")
        pair = (signed(self.crypto, self.keys, 1, 5, 1, a), signed(self.crypto, self.keys, 1, 5, 1, b))
        framed = SlashEvidence(EvidenceKind.EQUIVOCATION, 2, pair)
        self.assertFalse(verify_evidence(framed, self.crypto, self.keys, self.participants))

    def test_non_leader_proposal(self):
        seed = hash_fields("seed")
        leader = leader_for(3, 1, seed, self.participants, LeaderMode.PERMUTATION)
        other = next(m for m in self.participants.members if m != leader)
        evidence = SlashEvidence(
            EvidenceKind.NON_LEADER_PROPOSAL, other,
            (signed(self.crypto, self.keys, other, 3, 1, hash_fields("x")),),
            leader_seed=seed, leader_mode=LeaderMode.PERMUTATION,
        )
        self.assertTrue(verify_evidence(evidence, self.crypto, self.keys, self.participants))
        honest = SlashEvidence(
            EvidenceKind.NON_LEADER_PROPOSAL, leader,
            (signed(self.crypto, self.keys, leader, 3, 1, hash_fields("x")),),
            leader_seed=seed, leader_mode=LeaderMode.PERMUTATION,
        )
        self.assertFalse(verify_evidence(honest, self.crypto, self.keys, self.participants))

    def test_apply_slash_burns_deposit_and_excludes_votes(self):
        ledger = StakeLedger.genesis(self.participants)
        ledger, participants = apply_slash(
            ledger, self.equivocation, self.participants, self.crypto, self.keys, height=5
        )
        self.assertEqual(ledger.deposits[2], 0)
        self.assertEqual(ledger.confiscated, 100)
        self.assertTrue(ledger.is_conserved())
        self.assertFalse(participants.can_vote(2))
        self.assertEqual(participants.quorum, 3)

    def test_apply_slash_is_idempotent(self):
        ledger = StakeLedger.genesis(self.participants)
        ledger, participants = apply_slash(ledger, self.equivocation, self.participants, self.crypto, self.keys, 5)
        again, _ = apply_slash(ledger, self.equivocation, participants, self.crypto, self.keys, 6)
        self.assertEqual(again.confiscated, 100)
        self.assertEqual(len(again.slashed), 1)

    def test_apply_slash_errors(self):
        ledger = StakeLedger.genesis(self.participants)
        bogus = SlashEvidence(EvidenceKind.EQUIVOCATION, 2, self.equivocation.proposals[:1])
        with self.assertRaises(InvalidEvidence):
            apply_slash(ledger, bogus, self.participants, self.crypto, self.keys, 5)
        outsider = SlashEvidence(EvidenceKind.EQUIVOCATION, 9, self.equivocation.proposals)
        with self.assertRaises(NotAMember):
            apply_slash(ledger, outsider, self.participants, self.crypto, self.keys, 5)

    def test_ledger_join_and_leave_conserve_supply(self):
        ledger = StakeLedger.genesis(self.participants).deposit(4, 100).withdraw(1)
        self.assertTrue(ledger.is_conserved())
        self.assertNotIn(1, ledger.deposits)
        self.assertEqual(ledger.total_supply, 400)
