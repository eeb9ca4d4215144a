"""complexity.py

Closed forms, log-log fits and leader statistics for LinBFT runs.

The helpers here take finished :class:`linbft.RunReport` objects (or plain
``(n, volume)`` pairs) and turn them into pandas tables and exponents.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from linbft.chain import ParticipantSet
from linbft.crypto import dkg_cost
from linbft.digest import hash_fields
from linbft.epochs import amortized_setup
from linbft.errors import DegenerateSweep
from linbft.leaders import LeaderMode, leader_schedule, malicious_prefix, negligible_prefix

MIN_SWEEP_POINTS = 4

# Exponent above which a sweep is reported as degraded (quadratic fallback).
DEGRADED_SLOPE = 1.5


def ordinary_case_volume(n):
    """Units of one fault-free height on the collector path: 5(n-1)."""
    return 5 * (n - 1) if n > 1 else 0


def view_change_bound(n):
    """Upper bound on the extra units one view change may add."""
    return 4 * n


def pbft_baseline_volume(n):
    """Same phases with all-to-all Prepare and Commit: 5(n-1) + 2n(n-1)."""
    return ordinary_case_volume(n) + 2 * n * (n - 1)


def fallback_height_volume(n):
    """Units of one height finalized through raw-share broadcasts.

    Preprepare, PrepareVote and CommitVote stay constant-size. Both share
    bundles carry 2f+1 shares and cost n units on each of n-1 links.
    """
    return 3 * (n - 1) + 2 * n * (n - 1)


def fit_complexity(sweep, weighting="sqrt"):
    """Least-squares exponent of volume against n on log-log axes.

    Parameters
    ----------
    sweep : iterable of (n, volume)
        One point per run. Repeated n values are averaged first.
    weighting : {"sqrt", "none"}
        ``"sqrt"`` weights each residual by sqrt(n), which leans on the large-n
        end of the sweep. ``"none"`` gives the plain slope.

    Returns
    -------
    float
        The fitted exponent.
    """

    # 1) Average repeated n values so each size counts once.
    frame = pd.DataFrame(list(sweep), columns=["n", "volume"])
    if frame.empty:
        raise DegenerateSweep("empty sweep")
    points = frame.groupby("n")["volume"].mean().reset_index()

    # 2) A slope needs enough distinct sizes and positive volumes.
    if len(points) < MIN_SWEEP_POINTS:
        raise DegenerateSweep(
            f"{len(points)} distinct n values, need at least {MIN_SWEEP_POINTS}"
        )
    if (points["n"] <= 0).any() or (points["volume"] <= 0).any():
        raise DegenerateSweep("n and volume must be positive for a log-log fit")

    # 3) Fit log(volume) = slope * log(n) + c.
    x = np.log(points["n"].to_numpy(dtype=float))
    y = np.log(points["volume"].to_numpy(dtype=float))
    if weighting == "sqrt":
        weights = np.sqrt(points["n"].to_numpy(dtype=float))
    elif weighting == "none":
        weights = None
    else:
        raise ValueError(f"unknown weighting {weighting!r}")
    slope, _ = np.polyfit(x, y, 1, w=weights)
    return float(slope)


def amortized_setup_bound(n):
    """Target for per-block setup cost with E = 4n: ceil(log2 n)^3 / 2."""
    log_n = (n - 1).bit_length() if n > 1 else 0
    return log_n ** 3 / 2


def setup_table(n_values, epoch_factor=4, cost_constant=1):
    """Per-block epoch setup cost for each n, next to its polylog target."""
    rows = []
    for n in n_values:
        epoch_length = epoch_factor * n
        amortized = amortized_setup(n, epoch_length, cost_constant)
        rows.append({
            "n": n,
            "epoch_length": epoch_length,
            "dkg_units": dkg_cost(n, cost_constant),
            "exchange_units": n * (n - 1),
            "amortized_per_block": amortized,
            "bound": amortized_setup_bound(n),
            "within_bound": amortized <= amortized_setup_bound(n),
        })
    return pd.DataFrame(rows)


@dataclass
class ComplexityReport:
    n_values: list
    per_height_volume: dict
    amortized_per_block: dict
    baseline_volume: dict
    slope_fit: float
    baseline_slope: float
    max_malicious_prefix: int
    negligible_prefix: int
    amortized_constant: float
    degraded: bool = False
    fallback_heights: int = 0
    weighting: str = "sqrt"
    notes: list = field(default_factory=list)

    def frame(self):
        rows = []
        for n in self.n_values:
            rows.append({
                "n": n,
                "linbft_per_height": self.per_height_volume[n],
                "closed_form": ordinary_case_volume(n),
                "pbft_baseline": self.baseline_volume[n],
                "amortized_per_block": self.amortized_per_block[n],
            })
        return pd.DataFrame(rows)

    def as_dict(self):
        return {
            "record": "complexity",
            "n_values": list(self.n_values),
            "per_height_volume": {str(n): v for n, v in self.per_height_volume.items()},
            "amortized_per_block": {str(n): v for n, v in self.amortized_per_block.items()},
            "baseline_volume": {str(n): v for n, v in self.baseline_volume.items()},
            "slope_fit": self.slope_fit,
            "baseline_slope": self.baseline_slope,
            "max_malicious_prefix": self.max_malicious_prefix,
            "negligible_prefix": self.negligible_prefix,
            "amortized_constant": self.amortized_constant,
            "degraded": self.degraded,
            "fallback_heights": self.fallback_heights,
            "weighting": self.weighting,
            "notes": list(self.notes),
        }


def build_complexity_report(reports, weighting="sqrt"):
    """Summarize a sweep of run reports, one or more per n."""

    # 1) Mean consensus volume per height and amortized volume, per run.
    rows = []
    for report in reports:
        heights = [h for h in report.heights if h.finalized]
        if not heights:
            continue
        per_height = float(np.mean([h.consensus_units for h in heights]))
        setup = report.totals.get("setup", 0)
        rows.append({
            "n": report.n,
            "per_height": per_height,
            "amortized": per_height + setup / report.num_heights,
            "baseline": per_height + 2 * report.n * (report.n - 1),
            "fallback_heights": sum(1 for h in heights if h.path == "fallback"),
            "max_prefix": report.max_malicious_prefix,
            "negligible_prefix": report.negligible_prefix,
        })
    frame = pd.DataFrame(rows)
    if frame.empty:
        raise DegenerateSweep("no run finalized any height")

    # 2) Collapse repeated sizes and fit both curves.
    by_n = frame.groupby("n").mean(numeric_only=True)
    n_values = [int(n) for n in by_n.index]
    slope = fit_complexity(zip(n_values, by_n["per_height"]), weighting)
    baseline_slope = fit_complexity(zip(n_values, by_n["baseline"]), weighting)

    fallback_heights = int(frame["fallback_heights"].sum())
    notes = []
    degraded = slope > DEGRADED_SLOPE
    if degraded:
        notes.append(
            f"exponent {slope:.3f} exceeds {DEGRADED_SLOPE}: {fallback_heights} heights "
            "finalized through raw-share fallback"
        )

    return ComplexityReport(
        n_values=n_values,
        per_height_volume={n: float(by_n.loc[n, "per_height"]) for n in n_values},
        amortized_per_block={n: float(by_n.loc[n, "amortized"]) for n in n_values},
        baseline_volume={n: float(by_n.loc[n, "baseline"]) for n in n_values},
        slope_fit=slope,
        baseline_slope=baseline_slope,
        max_malicious_prefix=int(frame["max_prefix"].max()),
        negligible_prefix=int(frame["negligible_prefix"].max()),
        amortized_constant=float(max(by_n.loc[n, "amortized"] / n for n in n_values)),
        degraded=degraded,
        fallback_heights=fallback_heights,
        weighting=weighting,
        notes=notes,
    )


def view_change_costs(report):
    """Extra consensus units per view change, per height that changed view.

    The cost of a height with v view changes is its volume minus the
    fault-free volume, divided by v.
    """
    rows = []
    for h in report.heights:
        if h.view_changes == 0 or not h.finalized:
            continue
        extra = h.consensus_units - ordinary_case_volume(h.n)
        rows.append({
            "height": h.height,
            "n": h.n,
            "view_changes": h.view_changes,
            "extra_units": extra,
            "per_view_change": extra / h.view_changes,
            "bound": view_change_bound(h.n),
        })
    return pd.DataFrame(rows, columns=["height", "n", "view_changes", "extra_units", "per_view_change", "bound"])


# ---------- leader statistics ----------


def leader_prefix_frequencies(n, corrupted, heights, mode=LeaderMode.MODULAR, seed=0, max_x=6):
    """Empirical frequency of x consecutive malicious leaders from round 1.

    Every height draws its own seed. The table compares P(prefix >= x) with
    the 1/3^x bound plus three standard deviations of a binomial estimate.
    """
    participants = ParticipantSet.genesis(n)
    corrupted = frozenset(corrupted)
    prefixes = np.array([
        malicious_prefix(h, hash_fields("stats", seed, h), participants, corrupted, mode, limit=max_x)
        for h in range(1, heights + 1)
    ])

    rows = []
    for x in range(1, max_x + 1):
        bound = 3.0 ** -x
        sigma = math.sqrt(bound * (1 - bound) / heights)
        empirical = float(np.mean(prefixes >= x))
        rows.append({
            "x": x,
            "empirical": empirical,
            "bound": bound,
            "sigma": sigma,
            "within_bound": empirical <= bound + 3 * sigma,
        })
    return pd.DataFrame(rows)


def permutation_covers_members(participants, seed):
    """True if each member leads exactly once in rounds 1..n."""
    schedule = leader_schedule(seed, participants, participants.n, LeaderMode.PERMUTATION)
    return sorted(schedule) == sorted(participants.members)


def leader_uniformity(n, heights, mode=LeaderMode.MODULAR, seed=0):
    """Chi-square test of round-1 leaders against the uniform distribution.

    The p-value uses the Wilson-Hilferty cube-root normal approximation.
    """
    participants = ParticipantSet.genesis(n)
    schedule = [
        leader_schedule(hash_fields("uniformity", seed, h), participants, 1, mode)[0]
        for h in range(1, heights + 1)
    ]
    counts = np.bincount(np.array(schedule, dtype=int), minlength=n)
    expected = heights / n
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    dof = n - 1
    z = ((chi2 / dof) ** (1 / 3) - (1 - 2 / (9 * dof))) / math.sqrt(2 / (9 * dof))
    p_value = 0.5 * math.erfc(z / math.sqrt(2))
    return {"chi2": chi2, "dof": dof, "z": z, "p_value": p_value, "counts": counts.tolist()}


def malicious_prefix_summary(reports, rho=None):
    """Observed malicious-leader prefixes across runs, against x* from rho."""
    rows = []
    for report in reports:
        bound = negligible_prefix(rho) if rho is not None else report.negligible_prefix
        for h in report.heights:
            rows.append({
                "name": report.name,
                "seed": report.seed,
                "height": h.height,
                "malicious_prefix": h.malicious_prefix,
                "rounds_used": h.rounds_used,
                "flagged": h.malicious_prefix >= bound,
            })
    return pd.DataFrame(rows)


def heights_table(reports):
    """All height records from many runs in one DataFrame."""
    frames = []
    for report in reports:
        frame = report.heights_frame()
        frame.insert(0, "seed", report.seed)
        frame.insert(0, "n", report.n)
        frame.insert(0, "name", report.name)
        frames.append(frame)
    if not frames:
        return pd.DataFrame()
    return pd.concat(frames, ignore_index=True)
