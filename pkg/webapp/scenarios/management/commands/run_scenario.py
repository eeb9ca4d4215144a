from django.core.management.base import BaseCommand, CommandError

from linbft import ConfigInvalid, SafetyViolation, load_scenario, run_scenario, write_report
from linbft.reports import EXIT_CONFIG, EXIT_OK, EXIT_SAFETY
from scenarios.models import ScenarioRun

from ._common import linbft_settings, output_dir, overrides_from, resolve_config, set_library_verbosity


class Command(BaseCommand):
    """
    Simulate one scenario file and write its report.

    Usage examples:
        python manage.py run_scenario fault_free
        python manage.py run_scenario ../configs/silent_leader.toml --seed 7 --summary
        python manage.py run_scenario equivocation --n 16 --out /tmp/reports --record

    Exit status: 0 when the run is safe and every height finalized, 2 for an
    invalid scenario, 3 for a safety violation, 4 for unfinalized heights.
    """

    help = "Run one LinBFT scenario and write <name>-seed<seed>.jsonl/.txt reports."

    def add_arguments(self, parser):
        parser.add_argument("config", help="Scenario TOML file, or a name inside configs/.")
        parser.add_argument("--seed", type=int, help="Override the scenario seed.")
        parser.add_argument("--n", type=int, help="Override the number of participants.")
        parser.add_argument("--out", help="Report directory (default: LINBFT['REPORT_DIR']).")
        parser.add_argument(
            "--summary",
            action="store_true",
            help="Print the plain-text summary after the run.",
        )
        parser.add_argument(
            "--record",
            action="store_true",
            help="Store the run and its heights in the database.",
        )

    def handle(self, *args, **options):
        set_library_verbosity(options["verbosity"])
        path = resolve_config(options["config"])

        try:
            config = load_scenario(
                path,
                overrides=overrides_from(options, options.get("n")),
                defaults=linbft_settings().get("SCENARIO_DEFAULTS"),
            )
        except ConfigInvalid as exc:
            raise CommandError(f"Invalid scenario {path}: {exc}", returncode=EXIT_CONFIG) from exc

        self.stdout.write(self.style.NOTICE(
            f"Running {config.name}: n={config.n} f_actual={config.f_actual} "
            f"heights={config.num_heights} seed={config.seed}"
        ))

        try:
            report = run_scenario(config)
        except SafetyViolation as exc:
            # The report of a broken run is still written for inspection.
            if exc.report is not None:
                self._emit(exc.report, path, options)
            raise CommandError(f"Safety violation: {exc}", returncode=EXIT_SAFETY) from exc

        self._emit(report, path, options)

        if report.exit_code != EXIT_OK:
            unfinalized = [h.height for h in report.heights if not h.finalized]
            raise CommandError(
                f"Heights not finalized before the watchdog: {unfinalized}",
                returncode=report.exit_code,
            )
        if report.prefix_flags:
            self.stdout.write(self.style.WARNING(
                f"Malicious-leader prefix reached {report.negligible_prefix} at heights {report.prefix_flags}"
            ))
        self.stdout.write(self.style.SUCCESS(
            f"Finished {config.name}: rounds used {report.rounds_used}, "
            f"consensus units {report.totals.get('consensus', 0)}"
        ))

    def _emit(self, report, path, options):
        jsonl, text = write_report(report, output_dir(options.get("out")))
        self.stdout.write(self.style.NOTICE(f"Wrote {jsonl} and {text}"))
        if options.get("summary"):
            self.stdout.write(report.summary_text())
        if options.get("record"):
            run = ScenarioRun.record(report, config_path=path, report_path=jsonl)
            self.stdout.write(self.style.NOTICE(f"Recorded run #{run.pk}"))
