import json

from django.core.management.base import BaseCommand, CommandError

from analysis.complexity import MIN_SWEEP_POINTS, build_complexity_report
from linbft import ConfigInvalid, DegenerateSweep, SafetyViolation, load_scenario, run_scenario, write_report
from linbft.reports import EXIT_CONFIG, EXIT_OK, EXIT_SAFETY, EXIT_UNFINALIZED
from scenarios.models import ScenarioRun
from scenarios.utils import get_separation_chart

from ._common import linbft_settings, output_dir, overrides_from, resolve_config, set_library_verbosity


def parse_n_values(raw):
    try:
        values = [int(part) for part in raw.split(",") if part.strip()]
    except ValueError as exc:
        raise CommandError(f"--n expects comma-separated integers, got {raw!r}", returncode=EXIT_CONFIG) from exc
    if not values:
        raise CommandError("--n is empty", returncode=EXIT_CONFIG)
    return values


class Command(BaseCommand):
    """
    Run one scenario at several sizes and fit transmission volume against n.

    Usage examples:
        python manage.py sweep_scenarios fault_free
        python manage.py sweep_scenarios fault_free --n 4,16,64,256 --summary --plot
        python manage.py sweep_scenarios dkg_failure --n 4,7,10,16 --weighting none
    """

    help = "Sweep a scenario over n and write the complexity report."

    def add_arguments(self, parser):
        parser.add_argument("config", help="Base scenario TOML file, or a name inside configs/.")
        parser.add_argument(
            "--n",
            help="Comma-separated participant counts (default: LINBFT['SWEEP_N_VALUES']).",
        )
        parser.add_argument("--seed", type=int, help="Override the scenario seed.")
        parser.add_argument("--out", help="Report directory (default: LINBFT['REPORT_DIR']).")
        parser.add_argument("--summary", action="store_true", help="Print the sweep table.")
        parser.add_argument("--record", action="store_true", help="Store every run in the database.")
        parser.add_argument("--plot", action="store_true", help="Write the LinBFT vs PBFT chart as PNG.")
        parser.add_argument(
            "--weighting",
            choices=["sqrt", "none"],
            default="sqrt",
            help="Residual weighting of the log-log fit (default: sqrt).",
        )

    def handle(self, *args, **options):
        set_library_verbosity(options["verbosity"])
        path = resolve_config(options["config"])
        if options.get("n"):
            n_values = parse_n_values(options["n"])
        else:
            n_values = list(linbft_settings().get("SWEEP_N_VALUES", [4, 16, 64, 256]))

        if len(set(n_values)) < MIN_SWEEP_POINTS:
            raise CommandError(
                f"Degenerate sweep: {len(set(n_values))} distinct n values, need at least {MIN_SWEEP_POINTS}",
                returncode=EXIT_CONFIG,
            )

        # 1) Build every config first, so a bad size fails before any run.
        configs = []
        for n in n_values:
            try:
                configs.append(load_scenario(
                    path,
                    overrides=overrides_from(options, n),
                    defaults=linbft_settings().get("SCENARIO_DEFAULTS"),
                ))
            except ConfigInvalid as exc:
                raise CommandError(f"Invalid scenario {path} at n={n}: {exc}", returncode=EXIT_CONFIG) from exc

        out = output_dir(options.get("out"))
        base = configs[0]
        stem = f"{base.name}-sweep-seed{base.seed}"

        # 2) One run per size.
        reports = []
        for config in configs:
            self.stdout.write(self.style.NOTICE(f"Running {config.name} at n={config.n}"))
            try:
                report = run_scenario(config)
            except SafetyViolation as exc:
                if exc.report is not None:
                    write_report(exc.report, out, f"{config.name}-n{config.n}-seed{config.seed}")
                raise CommandError(f"Safety violation at n={config.n}: {exc}", returncode=EXIT_SAFETY) from exc
            jsonl, _ = write_report(report, out, f"{config.name}-n{config.n}-seed{config.seed}")
            if options.get("record"):
                ScenarioRun.record(report, config_path=path, report_path=jsonl)
            reports.append(report)

        # 3) Fit and write the sweep report.
        try:
            complexity = build_complexity_report(reports, weighting=options["weighting"])
        except DegenerateSweep as exc:
            raise CommandError(f"Degenerate sweep: {exc}", returncode=EXIT_CONFIG) from exc

        records = [report.summary_record() for report in reports] + [complexity.as_dict()]
        out.mkdir(parents=True, exist_ok=True)
        sweep_path = out / f"{stem}.jsonl"
        sweep_path.write_text(
            "".join(json.dumps(record, sort_keys=True) + "\n" for record in records),
            encoding="utf-8",
        )
        table = complexity.frame().to_string(index=False)
        summary = (
            f"sweep {base.name} (seed {base.seed}, weighting {complexity.weighting})\n"
            f"LinBFT exponent {complexity.slope_fit:.3f}, PBFT baseline exponent {complexity.baseline_slope:.3f}\n"
            f"{table}\n"
        )
        (out / f"{stem}.txt").write_text(summary, encoding="utf-8")
        self.stdout.write(self.style.NOTICE(f"Wrote {sweep_path}"))

        if options.get("summary"):
            self.stdout.write(summary)
            for note in complexity.notes:
                self.stdout.write(note)

        if options.get("plot"):
            png = out / f"{stem}.png"
            png.write_bytes(get_separation_chart(
                complexity.frame(),
                title=f"{base.name}: units per height",
                slope=complexity.slope_fit,
                baseline_slope=complexity.baseline_slope,
            ))
            self.stdout.write(self.style.NOTICE(f"Wrote {png}"))

        if complexity.degraded:
            self.stdout.write(self.style.WARNING(
                f"Degraded sweep: exponent {complexity.slope_fit:.3f} "
                f"({complexity.fallback_heights} fallback heights)"
            ))

        failed = [report.n for report in reports if report.exit_code != EXIT_OK]
        if failed:
            raise CommandError(f"Runs with unfinalized heights at n={failed}", returncode=EXIT_UNFINALIZED)

        self.stdout.write(self.style.SUCCESS(
            f"Finished sweep over n={n_values}: exponent {complexity.slope_fit:.3f}"
        ))
