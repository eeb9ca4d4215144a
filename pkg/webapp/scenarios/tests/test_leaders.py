import numpy as np
from django.test import SimpleTestCase, tag

from analysis.complexity import leader_prefix_frequencies, leader_uniformity, permutation_covers_members
from linbft.chain import ParticipantSet
from linbft.digest import hash_fields
from linbft.leaders import LeaderMode, leader_for, leader_schedule, malicious_prefix, negligible_prefix


class LeaderScheduleTests(SimpleTestCase):
    def setUp(self):
        self.participants = ParticipantSet.genesis(7)
        self.seed = hash_fields("seed", 1)

    def test_permutation_visits_every_member_once(self):
        for h in range(1, 50):
            seed = hash_fields("height", h)
            self.assertTrue(permutation_covers_members(self.participants, seed))

    def test_permutation_wraps_round_robin(self):
        first = leader_schedule(self.seed, self.participants, 7, LeaderMode.PERMUTATION)
        second = [leader_for(1, r, self.seed, self.participants, LeaderMode.PERMUTATION) for r in range(8, 15)]
        self.assertEqual(first, second)

    def test_every_replica_computes_the_same_leader(self):
        a = leader_for(4, 3, self.seed, self.participants, LeaderMode.MODULAR)
        b = leader_for(4, 3, hash_fields("seed", 1), ParticipantSet.genesis(7), LeaderMode.MODULAR)
        self.assertEqual(a, b)

    def test_single_member_always_leads(self):
        solo = ParticipantSet.genesis(1)
        self.assertEqual(leader_for(1, 5, self.seed, solo, LeaderMode.MODULAR), 0)

    def test_malicious_prefix(self):
        nobody = frozenset()
        everybody = frozenset(self.participants.members)
        self.assertEqual(malicious_prefix(1, self.seed, self.participants, nobody), 0)
        self.assertEqual(malicious_prefix(1, self.seed, self.participants, everybody, limit=10), 10)
        first = leader_for(1, 1, self.seed, self.participants, LeaderMode.PERMUTATION)
        self.assertGreaterEqual(malicious_prefix(1, self.seed, self.participants, frozenset({first})), 1)

    def test_negligible_prefix(self):
        self.assertEqual(negligible_prefix(1e-18), 38)
        self.assertEqual(negligible_prefix(1 / 9), 2)
        self.assertEqual(negligible_prefix(0.5), 1)


class LeaderStatisticsTests(SimpleTestCase):
    def test_modular_frequency_within_three_sigma(self):
        participants = ParticipantSet.genesis(7)
        rounds = 1000
        schedule = leader_schedule(hash_fields("leader-frequency"), participants, rounds, LeaderMode.MODULAR)
        counts = np.bincount(schedule, minlength=7)
        expected = rounds / 7
        sigma = np.sqrt(rounds * (1 / 7) * (6 / 7))
        self.assertEqual(counts.sum(), rounds)
        self.assertTrue((np.abs(counts - expected) <= 3 * sigma).all(), counts)

    def test_round_one_leaders_pass_chi_square(self):
        result = leader_uniformity(7, heights=2000)
        self.assertEqual(result["dof"], 6)
        self.assertEqual(sum(result["counts"]), 2000)
        self.assertGreater(result["p_value"], 0.01)

    def test_small_sample_shape(self):
        frame = leader_prefix_frequencies(9, {0, 1, 2}, heights=300)
        self.assertEqual(list(frame["x"]), [1, 2, 3, 4, 5, 6])
        self.assertTrue((frame["empirical"].diff().dropna() <= 0).all())

    @tag("slow")
    def test_modular_prefixes_stay_under_one_third_power(self):
        frame = leader_prefix_frequencies(9, {0, 1, 2}, heights=100_000, mode=LeaderMode.MODULAR)
        self.assertTrue(frame["within_bound"].all(), frame.to_string())

    @tag("slow")
    def test_round_one_leaders_are_uniform(self):
        result = leader_uniformity(16, heights=100_000)
        self.assertGreater(result["p_value"], 1e-4)
