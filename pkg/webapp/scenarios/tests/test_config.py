import tempfile
from pathlib import Path

from django.conf import settings
from django.test import SimpleTestCase

from linbft import ConfigInvalid, ScenarioConfig, load_scenario
from linbft.adversary import Behavior
from linbft.leaders import LeaderMode

from .helpers import CONFIG_DIR


class ScenarioConfigTests(SimpleTestCase):
    def test_defaults(self):
        config = ScenarioConfig().validate()
        self.assertEqual(config.effective_f, 1)
        self.assertEqual(config.effective_epoch_length, 16)
        self.assertEqual(config.effective_dkg_failure_prob, 1e-18)
        self.assertIs(config.leader_mode, LeaderMode.PERMUTATION)

    def test_n_must_exceed_three_f(self):
        with self.assertRaises(ConfigInvalid) as ctx:
            ScenarioConfig(n=3, f_actual=1).validate()
        self.assertIn("n >= 3f+1", str(ctx.exception))

    def test_all_problems_reported_together(self):
        with self.assertRaises(ConfigInvalid) as ctx:
            ScenarioConfig(n=4, num_heights=0, timeout_deltas=0).validate()
        self.assertIn("num_heights", str(ctx.exception))
        self.assertIn("timeout_deltas", str(ctx.exception))

    def test_from_mapping_corrupts_first_nodes_by_default(self):
        config = ScenarioConfig.from_mapping({"n": 7, "f_actual": 2, "adversary": {"behaviors": ["equivocate"]}})
        self.assertEqual(config.adversary.corrupted, frozenset({0, 1}))
        self.assertEqual(config.adversary.behaviors, (Behavior.EQUIVOCATE,))

    def test_unknown_keys_rejected(self):
        with self.assertRaises(ConfigInvalid):
            ScenarioConfig.from_mapping({"n": 4, "colour": "blue"})
        with self.assertRaises(ConfigInvalid):
            ScenarioConfig.from_mapping({"n": 4, "network": {"latency": 3}})
        with self.assertRaises(ConfigInvalid):
            ScenarioConfig.from_mapping({"n": 4, "adversary": {"behaviors": ["teleport"]}})

    def test_schema_version(self):
        with self.assertRaises(ConfigInvalid):
            ScenarioConfig.from_mapping({"schema_version": 2})

    def test_as_dict_round_trips(self):
        config = ScenarioConfig.from_mapping({"n": 7, "f_actual": 2, "speculative": True})
        self.assertEqual(ScenarioConfig.from_mapping(config.as_dict()).as_dict(), config.as_dict())


class LoadScenarioTests(SimpleTestCase):
    def test_example_files_parse(self):
        for path in sorted(CONFIG_DIR.glob("*.toml")):
            if path.stem == "invalid":
                continue
            with self.subTest(path=path.name):
                config = load_scenario(path, defaults=settings.LINBFT["SCENARIO_DEFAULTS"])
                self.assertEqual(config.name, path.stem)

    def test_invalid_example(self):
        with self.assertRaises(ConfigInvalid):
            load_scenario(CONFIG_DIR / "invalid.toml")

    def test_layering(self):
        config = load_scenario(
            CONFIG_DIR / "fault_free.toml",
            overrides={"seed": 42, "n": 16},
            defaults={"timeout_deltas": 8, "network": {"delta": 5}},
        )
        self.assertEqual((config.seed, config.n), (42, 16))
        self.assertEqual(config.timeout_deltas, 8)
        # the file's delta wins over the defaults
        self.assertEqual(config.network.delta, 10)

    def test_infinite_gst(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "never.toml"
            path.write_text('n = 4\n[network]\ngst = "inf"\n', encoding="utf-8")
            config = load_scenario(path)
        self.assertIsNone(config.network.gst)

    def test_missing_and_broken_files(self):
        with self.assertRaises(ConfigInvalid):
            load_scenario(CONFIG_DIR / "does_not_exist.toml")
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "broken.toml"
            path.write_text("n = = 4\n", encoding="utf-8")
            with self.assertRaises(ConfigInvalid):
                load_scenario(path)
