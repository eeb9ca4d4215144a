import json
import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase, tag

from scenarios.management.commands.sweep_scenarios import parse_n_values
from scenarios.models import HeightOutcome, ScenarioRun

from .helpers import CONFIG_DIR


class CommandTestMixin:
    def setUp(self):
        super().setUp()
        self._tmp = tempfile.TemporaryDirectory()
        self.out = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()
        super().tearDown()

    def call(self, *args, **options):
        stdout = StringIO()
        call_command(*args, stdout=stdout, out=str(self.out), **options)
        return stdout.getvalue()


class RunScenarioCommandTests(CommandTestMixin, SimpleTestCase):
    def test_fault_free_run_writes_reports(self):
        output = self.call("run_scenario", str(CONFIG_DIR / "fault_free.toml"), summary=True)
        jsonl = self.out / "fault_free-seed1.jsonl"
        self.assertTrue(jsonl.exists())
        self.assertTrue((self.out / "fault_free-seed1.txt").exists())
        run = json.loads(jsonl.read_text(encoding="utf-8").splitlines()[0])
        self.assertEqual(run["rounds_used"], [1] * 10)
        self.assertEqual(run["exit_code"], 0)
        self.assertIn("safety: ok", output)

    def test_config_name_resolves_inside_config_dir(self):
        self.call("run_scenario", "fault_free", seed=4, n=7)
        run = json.loads((self.out / "fault_free-seed4.jsonl").read_text(encoding="utf-8").splitlines()[0])
        self.assertEqual(run["n"], 7)

    def test_rerun_is_bytewise_identical(self):
        self.call("run_scenario", "silent_leader")
        first = (self.out / "silent_leader-seed3.jsonl").read_bytes()
        self.call("run_scenario", "silent_leader")
        self.assertEqual((self.out / "silent_leader-seed3.jsonl").read_bytes(), first)

    def test_invalid_config_exits_2(self):
        with self.assertRaises(CommandError) as ctx:
            self.call("run_scenario", "invalid")
        self.assertEqual(ctx.exception.returncode, 2)

    def test_missing_config_exits_2(self):
        with self.assertRaises(CommandError) as ctx:
            self.call("run_scenario", "no_such_scenario")
        self.assertEqual(ctx.exception.returncode, 2)


class SweepCommandTests(CommandTestMixin, SimpleTestCase):
    def test_parse_n_values(self):
        self.assertEqual(parse_n_values("4, 16,64"), [4, 16, 64])
        with self.assertRaises(CommandError):
            parse_n_values("4,x")

    def test_single_value_sweep_is_degenerate(self):
        with self.assertRaises(CommandError) as ctx:
            self.call("sweep_scenarios", "fault_free", n="16")
        self.assertEqual(ctx.exception.returncode, 2)

    def test_small_sweep_writes_per_size_reports(self):
        self.call("sweep_scenarios", "fault_free", n="4,7,10,13")
        lines = (self.out / "fault_free-sweep-seed1.txt").read_text(encoding="utf-8").splitlines()
        self.assertTrue(lines[0].startswith("sweep fault_free (seed 1, weighting sqrt)"))
        for n in (4, 7, 10, 13):
            run = json.loads((self.out / f"fault_free-n{n}-seed1.jsonl").read_text(encoding="utf-8").splitlines()[0])
            self.assertEqual(run["totals"]["consensus"], 5 * (n - 1) * 10)

    @tag("slow")
    def test_sweep_writes_complexity_record_and_chart(self):
        output = self.call("sweep_scenarios", "fault_free", n="4,16,64,256", seed=2, summary=True, plot=True)
        lines = (self.out / "fault_free-sweep-seed2.jsonl").read_text(encoding="utf-8").splitlines()
        records = [json.loads(line) for line in lines]
        self.assertEqual([r["record"] for r in records], ["run"] * 4 + ["complexity"])
        complexity = records[-1]
        self.assertTrue(0.95 <= complexity["slope_fit"] <= 1.05)
        self.assertTrue(1.9 <= complexity["baseline_slope"] <= 2.1)
        self.assertEqual(complexity["per_height_volume"]["64"], 315.0)
        png = (self.out / "fault_free-sweep-seed2.png").read_bytes()
        self.assertTrue(png.startswith(b"\x89PNG"))
        self.assertIn("LinBFT exponent", output)
        for n in (4, 16, 64, 256):
            self.assertTrue((self.out / f"fault_free-n{n}-seed2.jsonl").exists())

    def test_sweep_sizes_that_break_the_scenario_exit_2(self):
        with self.assertRaises(CommandError) as ctx:
            self.call("sweep_scenarios", "equivocation", n="4,7,10,13")
        self.assertEqual(ctx.exception.returncode, 2)


class RecordTests(CommandTestMixin, TestCase):
    def test_record_stores_run_and_heights(self):
        self.call("run_scenario", "fault_free", record=True)
        run = ScenarioRun.objects.get()
        self.assertEqual(run.name, "fault_free")
        self.assertEqual(run.exit_code, 0)
        self.assertEqual(run.consensus_units, 150)
        self.assertEqual(run.per_height_units, 15.0)
        self.assertEqual(run.heights.count(), 10)
        self.assertEqual(
            list(HeightOutcome.objects.values_list("rounds_used", flat=True).distinct()), [1]
        )
        self.assertIn("n=4", str(run))
