"""Run reports: per-height outcomes, epoch history and the run verdicts.

Reports serialize to line-delimited JSON with sorted keys, so two runs of the
same scenario produce identical bytes. The summary table goes through pandas.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import pandas as pd

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SAFETY = 3
EXIT_UNFINALIZED = 4


@dataclass
class HeightRecord:
    height: int
    epoch: int
    n: int
    block_hash: Optional[str] = None
    proposer: Optional[int] = None
    rounds_used: int = 0
    max_round: int = 1
    finalized_at: Optional[int] = None
    all_finalized_at: Optional[int] = None
    path: str = "unfinalized"
    speculation: str = "off"
    consensus_units: int = 0
    constant_units: int = 0
    linear_units: int = 0
    messages: int = 0
    ignored: int = 0
    body_units: int = 0
    catchup_units: int = 0
    setup_units: int = 0
    evidence: int = 0
    slashed: list = field(default_factory=list)
    malicious_prefix: int = 0
    pass_elapsed: list = field(default_factory=list)

    @property
    def view_changes(self) -> int:
        return max(self.max_round - 1, 0)

    @property
    def finalized(self) -> bool:
        return self.block_hash is not None

    def as_row(self) -> dict:
        row = asdict(self)
        row["view_changes"] = self.view_changes
        return row


@dataclass
class EpochRecord:
    epoch: int
    generation: int
    start_height: int
    n: int
    t: int
    members: list
    keys_valid: bool
    dkg_units: int
    exchange_units: int = 0
    joined: list = field(default_factory=list)
    left: list = field(default_factory=list)

    def as_row(self) -> dict:
        return asdict(self)


@dataclass
class RunReport:
    name: str
    seed: int
    n: int
    f: int
    f_actual: int
    num_heights: int
    heights: list
    epochs: list
    safety_ok: bool
    liveness_ok: bool
    liveness_required: bool
    finished_at: int
    timed_out: bool
    violations: list = field(default_factory=list)
    totals: dict = field(default_factory=dict)
    slashes: list = field(default_factory=list)
    negligible_prefix: int = 0
    config: dict = field(default_factory=dict)

    @property
    def rounds_used(self) -> list:
        return [h.rounds_used for h in self.heights]

    @property
    def max_malicious_prefix(self) -> int:
        return max((h.malicious_prefix for h in self.heights), default=0)

    @property
    def prefix_flags(self) -> list:
        """Heights whose malicious-leader prefix reached the negligible bound."""
        return [h.height for h in self.heights if h.malicious_prefix >= self.negligible_prefix]

    @property
    def exit_code(self) -> int:
        if not self.safety_ok:
            return EXIT_SAFETY
        if self.liveness_required and not self.liveness_ok:
            return EXIT_UNFINALIZED
        return EXIT_OK

    def per_height_volume(self) -> list:
        return [h.consensus_units for h in self.heights]

    def summary_record(self) -> dict:
        return {
            "record": "run",
            "name": self.name,
            "seed": self.seed,
            "n": self.n,
            "f": self.f,
            "f_actual": self.f_actual,
            "num_heights": self.num_heights,
            "safety_ok": self.safety_ok,
            "liveness_ok": self.liveness_ok,
            "liveness_required": self.liveness_required,
            "finished_at": self.finished_at,
            "timed_out": self.timed_out,
            "violations": list(self.violations),
            "totals": dict(self.totals),
            "slashes": list(self.slashes),
            "rounds_used": self.rounds_used,
            "max_malicious_prefix": self.max_malicious_prefix,
            "negligible_prefix": self.negligible_prefix,
            "prefix_flags": self.prefix_flags,
            "exit_code": self.exit_code,
            "config": self.config,
        }

    def to_records(self) -> list:
        records = [self.summary_record()]
        records += [{"record": "height", **h.as_row()} for h in self.heights]
        records += [{"record": "epoch", **e.as_row()} for e in self.epochs]
        return records

    def to_jsonl(self) -> str:
        return "".join(json.dumps(record, sort_keys=True) + "\n" for record in self.to_records())

    def heights_frame(self) -> pd.DataFrame:
        return pd.DataFrame([h.as_row() for h in self.heights])

    def summary_text(self) -> str:
        frame = self.heights_frame()
        columns = [
            "height", "rounds_used", "view_changes", "path", "speculation",
            "consensus_units", "body_units", "setup_units", "finalized_at", "malicious_prefix",
        ]
        lines = [
            f"scenario {self.name}: n={self.n} f={self.f} f_actual={self.f_actual} seed={self.seed}",
            f"safety: {'ok' if self.safety_ok else 'VIOLATED'}   "
            f"liveness: {'ok' if self.liveness_ok else 'UNFINALIZED'}"
            f"{'' if self.liveness_required else ' (not required, GST = inf)'}",
            f"finished at t={self.finished_at}{' (watchdog expired)' if self.timed_out else ''}",
            "totals: " + ", ".join(f"{channel}={units}" for channel, units in sorted(self.totals.items())),
        ]
        if self.slashes:
            lines.append("slashed: " + ", ".join(f"node {s['node']} at h{s['height']} ({s['kind']})" for s in self.slashes))
        for violation in self.violations:
            lines.append(f"violation: {violation}")
        lines.append(
            f"max malicious prefix {self.max_malicious_prefix} (negligible from {self.negligible_prefix})"
        )
        if not frame.empty:
            lines.append("")
            lines.append(frame[columns].to_string(index=False))
        return "\n".join(lines) + "\n"


def write_report(report: RunReport, directory, stem: Optional[str] = None) -> tuple:
    """Write ``<stem>.jsonl`` and ``<stem>.txt`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = stem or f"{report.name}-seed{report.seed}"
    jsonl = directory / f"{stem}.jsonl"
    text = directory / f"{stem}.txt"
    jsonl.write_text(report.to_jsonl(), encoding="utf-8")
    text.write_text(report.summary_text(), encoding="utf-8")
    return jsonl, text
