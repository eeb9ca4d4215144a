from django.db import models, transaction

PATH_CHOICES = [
    ("collector", "Collector"),
    ("speculative", "Speculative"),
    ("fallback", "Raw-share fallback"),
    ("unfinalized", "Unfinalized"),
]


class ScenarioRun(models.Model):
    """
    ScenarioRun model

    One simulated run of a scenario file, stored when a command is called
    with ``--record``. The full report stays on disk; this row keeps the
    verdicts and totals so past runs can be browsed in the admin.
    """

    name = models.CharField(max_length=100)
    config_path = models.CharField(max_length=500, blank=True)
    report_path = models.CharField(max_length=500, blank=True)
    created = models.DateTimeField(auto_now_add=True)

    # Scenario knobs
    seed = models.BigIntegerField()
    n = models.IntegerField(help_text="Genesis participant count.")
    f = models.IntegerField(help_text="Fault bound the quorum is built for.")
    f_actual = models.IntegerField(help_text="Number of corrupted nodes in the run.")
    num_heights = models.IntegerField()

    # Verdicts
    safety_ok = models.BooleanField()
    liveness_ok = models.BooleanField()
    exit_code = models.IntegerField()

    # Volume in units (one constant-size message on one link)
    consensus_units = models.BigIntegerField(default=0)
    body_units = models.BigIntegerField(default=0)
    catchup_units = models.BigIntegerField(default=0)
    setup_units = models.BigIntegerField(default=0)

    finished_at = models.BigIntegerField(help_text="Simulated time when the run stopped.")
    max_malicious_prefix = models.IntegerField(default=0)
    slashes = models.IntegerField(default=0)

    class Meta:
        indexes = [
            models.Index(fields=["name"], name="scenario_run_name_idx"),
            models.Index(fields=["n"], name="scenario_run_n_idx"),
        ]
        ordering = ["-created", "name"]

    def __str__(self) -> str:
        verdict = "ok" if self.exit_code == 0 else f"exit {self.exit_code}"
        return f"{self.name} (n={self.n}, seed={self.seed}, {verdict})"

    @property
    def per_height_units(self) -> float:
        return self.consensus_units / self.num_heights if self.num_heights else 0.0

    @classmethod
    def record(cls, report, config_path="", report_path=""):
        """Store ``report`` and one HeightOutcome per height."""
        totals = report.totals
        with transaction.atomic():
            run = cls.objects.create(
                name=report.name,
                config_path=str(config_path),
                report_path=str(report_path),
                seed=report.seed,
                n=report.n,
                f=report.f,
                f_actual=report.f_actual,
                num_heights=report.num_heights,
                safety_ok=report.safety_ok,
                liveness_ok=report.liveness_ok,
                exit_code=report.exit_code,
                consensus_units=totals.get("consensus", 0),
                body_units=totals.get("body", 0),
                catchup_units=totals.get("catchup", 0),
                setup_units=totals.get("setup", 0),
                finished_at=report.finished_at,
                max_malicious_prefix=report.max_malicious_prefix,
                slashes=len(report.slashes),
            )
            HeightOutcome.objects.bulk_create([
                HeightOutcome(
                    run=run,
                    height=h.height,
                    epoch=h.epoch,
                    rounds_used=h.rounds_used,
                    view_changes=h.view_changes,
                    path=h.path,
                    speculation=h.speculation,
                    consensus_units=h.consensus_units,
                    finalized_at=h.finalized_at,
                    block_hash=h.block_hash or "",
                    malicious_prefix=h.malicious_prefix,
                )
                for h in report.heights
            ])
        return run


class HeightOutcome(models.Model):
    run = models.ForeignKey(ScenarioRun, on_delete=models.CASCADE, related_name="heights")
    height = models.IntegerField()
    epoch = models.IntegerField(default=0)
    rounds_used = models.IntegerField(help_text="Round whose certificate finalized the height.")
    view_changes = models.IntegerField(default=0)
    path = models.CharField(max_length=20, choices=PATH_CHOICES)
    speculation = models.CharField(max_length=20, default="off")
    consensus_units = models.BigIntegerField(default=0)
    finalized_at = models.BigIntegerField(null=True, blank=True)
    block_hash = models.CharField(max_length=64, blank=True)
    malicious_prefix = models.IntegerField(default=0)

    class Meta:
        ordering = ["run", "height"]
        constraints = [
            models.UniqueConstraint(fields=["run", "height"], name="unique_height_per_run"),
        ]

    def __str__(self) -> str:
        return f"{self.run.name} h{self.height} (round {self.rounds_used}, {self.path})"
