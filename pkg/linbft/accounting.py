"""Transmission accounting.

One unit is one constant-size message on one link. Linear-class messages
(fallback share bundles, certificates backed by raw shares, block bodies) cost
``n`` units. Every send is logged; the receiver decides afterwards whether the
delivery counted toward completing the protocol.
"""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import asdict, dataclass
from typing import Iterable, Optional

# Channels keep the consensus volume separate from the traffic that both
# readings of the protocol's cost may or may not include.
CONSENSUS = "consensus"
BODY = "body"
CATCHUP = "catchup"
SETUP = "setup"


class SizeClass(enum.Enum):
    CONSTANT = "constant"
    LINEAR = "linear"

    def units(self, n: int) -> int:
        return 1 if self is SizeClass.CONSTANT else n


@dataclass(slots=True)
class TransmissionRecord:
    height: int
    round: int
    msg_kind: str
    size_class: SizeClass
    n: int
    count: int = 1
    sender: Optional[int] = None
    receiver: Optional[int] = None
    time: int = 0
    channel: str = CONSENSUS
    counted_toward_completion: bool = True

    @property
    def units(self) -> int:
        return self.count * self.size_class.units(self.n)

    def as_row(self) -> dict:
        row = asdict(self)
        row["size_class"] = self.size_class.value
        row["units"] = self.units
        return row


class TransmissionLog:
    """Append-only log written by the simulator loop."""

    def __init__(self):
        self.records: list[TransmissionRecord] = []

    def append(self, record: TransmissionRecord) -> TransmissionRecord:
        self.records.append(record)
        return record

    def extend(self, records: Iterable[TransmissionRecord]):
        for record in records:
            self.append(record)

    def counted(self, channel: str = CONSENSUS) -> list[TransmissionRecord]:
        return [
            r for r in self.records
            if r.channel == channel and r.counted_toward_completion
        ]

    def volume_by_height(self, channel: str = CONSENSUS) -> dict[int, int]:
        totals: dict[int, int] = defaultdict(int)
        for record in self.counted(channel):
            totals[record.height] += record.units
        return dict(totals)

    def total_units(self, channel: str = CONSENSUS) -> int:
        return sum(r.units for r in self.counted(channel))

    def rows(self) -> list[dict]:
        return [record.as_row() for record in self.records]
