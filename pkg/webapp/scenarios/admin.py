from django.contrib import admin
from .models import HeightOutcome, ScenarioRun


class HeightOutcomeInline(admin.TabularInline):
    model = HeightOutcome
    extra = 0
    fields = ("height", "epoch", "rounds_used", "view_changes", "path", "speculation", "consensus_units", "finalized_at")
    readonly_fields = fields
    can_delete = False


@admin.register(ScenarioRun)
class ScenarioRunAdmin(admin.ModelAdmin):
    """
    Admin configuration for ScenarioRun.

    This makes it easy to:
    - browse recorded runs and their verdicts
    - filter by size, verdict and exit code
    - open a run to see every height it finalized
    """

    list_display = (
        "name",
        "n",
        "f_actual",
        "seed",
        "safety_ok",
        "liveness_ok",
        "consensus_units",
        "exit_code",
        "created",
    )
    list_filter = ("n", "safety_ok", "liveness_ok", "exit_code")
    search_fields = ("name", "config_path")
    ordering = ("-created",)
    inlines = [HeightOutcomeInline]


@admin.register(HeightOutcome)
class HeightOutcomeAdmin(admin.ModelAdmin):
    list_display = ("run", "height", "rounds_used", "path", "consensus_units")
    list_filter = ("path", "speculation")
    ordering = ("run", "height")
