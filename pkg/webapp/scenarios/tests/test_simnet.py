from django.conf import settings
from django.test import SimpleTestCase, tag

from analysis.complexity import fallback_height_volume, ordinary_case_volume, view_change_bound, view_change_costs
from linbft import ConfigInvalid, ScenarioConfig, Simulator, load_scenario, run_scenario
from linbft.adversary import AdversarySpec, Behavior
from linbft.chain import Block
from linbft.cosi import tree_depth
from linbft.digest import ZERO_DIGEST
from linbft.leaders import LeaderMode
from linbft.messages import CommitCert, FinalityProof
from linbft.network import NetworkConfig
from linbft.replica import Finalized
from linbft.reports import EXIT_OK, EXIT_SAFETY

from .helpers import CONFIG_DIR


def scenario(name, **overrides):
    return load_scenario(
        CONFIG_DIR / f"{name}.toml",
        overrides=overrides or None,
        defaults=settings.LINBFT["SCENARIO_DEFAULTS"],
    )


class FaultFreeTests(SimpleTestCase):
    def test_every_height_in_round_one_with_linear_volume(self):
        report = run_scenario(scenario("fault_free"))
        self.assertEqual(report.exit_code, EXIT_OK)
        self.assertEqual(report.rounds_used, [1] * 10)
        self.assertEqual(report.per_height_volume(), [15] * 10)
        self.assertTrue(all(h.path == "collector" for h in report.heights))
        self.assertTrue(all(h.view_changes == 0 for h in report.heights))

    def test_body_is_one_linear_record_per_height(self):
        report = run_scenario(ScenarioConfig(n=4, num_heights=3, seed=2))
        self.assertEqual([h.body_units for h in report.heights], [4, 4, 4])

    def test_chain_links_up(self):
        report = run_scenario(ScenarioConfig(n=7, num_heights=5, seed=9))
        hashes = [h.block_hash for h in report.heights]
        self.assertEqual(len(set(hashes)), 5)
        self.assertTrue(report.safety_ok and report.liveness_ok)

    def test_volume_at_sixteen(self):
        report = run_scenario(ScenarioConfig(n=16, num_heights=3, seed=4))
        self.assertEqual(report.per_height_volume(), [ordinary_case_volume(16)] * 3)

    @tag("slow")
    def test_volume_matches_closed_form_up_to_256(self):
        for n in (4, 16, 64, 256):
            with self.subTest(n=n):
                report = run_scenario(ScenarioConfig(n=n, num_heights=2, seed=1))
                self.assertEqual(report.per_height_volume(), [5 * (n - 1)] * 2)

    def test_epoch_setup_is_accounted(self):
        report = run_scenario(ScenarioConfig(n=4, num_heights=2, seed=1))
        genesis = report.epochs[0]
        self.assertEqual(genesis.dkg_units, 4 * 8)
        self.assertEqual(genesis.exchange_units, 12)
        self.assertEqual(report.totals["setup"], 44)


class DeterminismTests(SimpleTestCase):
    def test_same_seed_same_bytes(self):
        config = scenario("silent_leader")
        self.assertEqual(run_scenario(config).to_jsonl(), run_scenario(config).to_jsonl())

    def test_different_seed_different_chain(self):
        a = run_scenario(ScenarioConfig(n=4, num_heights=2, seed=1))
        b = run_scenario(ScenarioConfig(n=4, num_heights=2, seed=2))
        self.assertNotEqual(a.heights[0].block_hash, b.heights[0].block_hash)

    def test_invalid_config_never_runs(self):
        with self.assertRaises(ConfigInvalid):
            run_scenario(ScenarioConfig(n=3, f_actual=1))


class FaultyLeaderTests(SimpleTestCase):
    def test_silent_leader_recovers_within_f_plus_one_rounds(self):
        view_changes = 0
        for seed in range(1, 6):
            report = run_scenario(scenario("silent_leader", seed=seed))
            self.assertEqual(report.exit_code, EXIT_OK)
            self.assertTrue(all(h.finalized for h in report.heights))
            self.assertLessEqual(max(h.max_round for h in report.heights), 2)
            costs = view_change_costs(report)
            self.assertTrue((costs["per_view_change"] <= view_change_bound(4)).all(), costs.to_string())
            view_changes += sum(h.view_changes for h in report.heights)
        self.assertGreater(view_changes, 0)

    def test_equivocation_is_detected_and_slashed(self):
        evidence = 0
        for seed in range(1, 6):
            report = run_scenario(scenario("equivocation", seed=seed))
            self.assertTrue(report.safety_ok)
            self.assertTrue(report.liveness_ok)
            evidence += sum(h.evidence for h in report.heights)
            self.assertTrue({s["node"] for s in report.slashes} <= {0, 1})
        self.assertGreater(evidence, 0)

    def test_invalid_and_unscheduled_proposals_are_slashed(self):
        report = run_scenario(scenario("invalid_proposal"))
        self.assertEqual(report.exit_code, EXIT_OK)
        self.assertGreater(sum(h.evidence for h in report.heights), 0)
        self.assertEqual({s["node"] for s in report.slashes}, {2})

    def test_rotating_corruption(self):
        report = run_scenario(scenario("rotating_corruption"))
        self.assertTrue(report.safety_ok)
        self.assertEqual(report.exit_code, EXIT_OK)


class NetworkTests(SimpleTestCase):
    def test_delayed_network_finalizes_after_gst(self):
        report = run_scenario(scenario("delayed_network"))
        self.assertEqual(report.exit_code, EXIT_OK)
        self.assertTrue(all(h.finalized for h in report.heights))

    def test_never_stable_network_is_not_a_failure(self):
        config = ScenarioConfig(
            n=4, num_heights=2, network=NetworkConfig(delta=10, gst=None, drop_before_gst=True)
        )
        report = run_scenario(config)
        self.assertTrue(report.timed_out)
        self.assertFalse(report.liveness_ok)
        self.assertFalse(report.liveness_required)
        self.assertEqual(report.exit_code, EXIT_OK)
        self.assertEqual(report.rounds_used, [0, 0])


class FallbackTests(SimpleTestCase):
    def test_failed_dkg_finalizes_with_quadratic_volume(self):
        report = run_scenario(scenario("dkg_failure"))
        self.assertEqual(report.exit_code, EXIT_OK)
        self.assertTrue(all(h.path == "fallback" for h in report.heights))
        for h in report.heights:
            if h.view_changes == 0:
                self.assertEqual(h.consensus_units, fallback_height_volume(7))
        # one DKG re-run per fallback height
        self.assertGreaterEqual(len(report.epochs), len(report.heights))
        self.assertFalse(any(e.keys_valid for e in report.epochs))


class SpeculativeTests(SimpleTestCase):
    def check(self, n, heights=3):
        spec = run_scenario(ScenarioConfig(n=n, num_heights=heights, seed=17, speculative=True))
        plain = run_scenario(ScenarioConfig(n=n, num_heights=heights, seed=17))
        self.assertEqual(spec.exit_code, EXIT_OK)
        self.assertEqual([h.path for h in spec.heights], ["speculative"] * heights)
        budget = 2 * tree_depth(n) * 10
        for h in spec.heights:
            self.assertEqual(len(h.pass_elapsed), 2)
            self.assertTrue(all(elapsed <= budget for elapsed in h.pass_elapsed), h.pass_elapsed)
        self.assertEqual([h.block_hash for h in spec.heights], [h.block_hash for h in plain.heights])

    def test_all_signers_path(self):
        for n in (4, 16):
            with self.subTest(n=n):
                self.check(n)

    @tag("slow")
    def test_all_signers_path_large(self):
        for n in (64, 256):
            with self.subTest(n=n):
                self.check(n, heights=2)

    def test_silent_signer_falls_back_to_collector(self):
        config = ScenarioConfig(
            n=7, f_actual=1, num_heights=3, seed=17, speculative=True,
            adversary=AdversarySpec(corrupted=frozenset({3}), behaviors=(Behavior.VOTE_WITHHOLD,)),
        )
        report = run_scenario(config)
        self.assertEqual(report.exit_code, EXIT_OK)
        self.assertTrue(all(h.path == "collector" for h in report.heights))
        self.assertTrue(all(h.speculation in ("fallback", "skipped") for h in report.heights))


class MembershipTests(SimpleTestCase):
    def test_join_and_leave_at_epoch_boundary(self):
        report = run_scenario(scenario("membership"))
        self.assertEqual(report.exit_code, EXIT_OK)
        epoch_one = next(e for e in report.epochs if e.epoch == 1)
        self.assertEqual(epoch_one.start_height, 5)
        self.assertEqual(epoch_one.joined, [4])
        self.assertEqual(epoch_one.left, [1])
        self.assertEqual(epoch_one.members, [0, 2, 3, 4])
        self.assertTrue(all(h.finalized for h in report.heights))


class SafetyCheckTests(SimpleTestCase):
    def test_conflicting_finalizations_are_flagged(self):
        sim = Simulator(ScenarioConfig(n=4, num_heights=1))
        blocks = [Block(1, ZERO_DIGEST, 0, 1, txs=()), Block(1, ZERO_DIGEST, 1, 1, txs=())]
        for node, block in zip((0, 1), blocks):
            proof = FinalityProof(CommitCert(1, 1, block.digest))
            sim._on_finalized(sim.replicas[node], Finalized(1, block, proof))
        report = sim.report()
        self.assertFalse(report.safety_ok)
        self.assertEqual(report.exit_code, EXIT_SAFETY)
        self.assertEqual(len(report.violations), 1)


@tag("slow")
class SafetyBatchTests(SimpleTestCase):
    """A thousand seeded runs across fault families and sizes."""

    FAMILIES = ("fault_free", "silent_leader", "equivocation", "delayed_network", "dkg_failure", "rotating_corruption")

    def test_no_fork_in_a_thousand_runs(self):
        runs = 0
        for family in self.FAMILIES:
            base = scenario(family)
            for n, seeds in ((4, 56), (7, 56), (16, 56), (64, 4)):
                f = (n - 1) // 3
                for seed in range(seeds):
                    data = base.as_dict()
                    data.update(n=n, f=f, seed=seed, num_heights=3, epoch_length=4 * n)
                    # Families with an adversary run with the full f corrupted.
                    data["f_actual"] = f if base.f_actual else 0
                    adversary = data["adversary"]
                    if adversary["rotate"]:
                        adversary["corrupted"] = []
                        adversary["rotate_count"] = data["f_actual"]
                    else:
                        adversary["corrupted"] = list(range(data["f_actual"]))
                    config = ScenarioConfig.from_mapping(data)
                    report = run_scenario(config, raise_on_violation=False)
                    with self.subTest(family=family, n=n, seed=seed):
                        self.assertTrue(report.safety_ok, report.violations)
                        if report.liveness_required:
                            self.assertTrue(report.liveness_ok)
                    runs += 1
        self.assertGreaterEqual(runs, 1000)

    def test_f_silent_leaders_cost_at_most_f_view_changes(self):
        for n, seeds in ((4, 30), (16, 10), (64, 3)):
            f = (n - 1) // 3
            for seed in range(1, seeds + 1):
                config = ScenarioConfig(
                    name=f"silent-{n}",
                    n=n,
                    f_actual=f,
                    num_heights=3,
                    seed=seed,
                    leader_mode=LeaderMode.PERMUTATION,
                    network=NetworkConfig(delta=10, gst=0),
                    adversary=AdversarySpec(
                        corrupted=frozenset(range(f)), behaviors=(Behavior.SILENT_LEADER,)
                    ),
                )
                report = run_scenario(config)
                with self.subTest(n=n, seed=seed):
                    self.assertEqual(report.exit_code, EXIT_OK)
                    self.assertLessEqual(max(h.max_round for h in report.heights), f + 1)
                    costs = view_change_costs(report)
                    self.assertTrue((costs["per_view_change"] <= costs["bound"]).all(), costs.to_string())
