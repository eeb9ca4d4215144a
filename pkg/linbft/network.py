"""Partial-synchrony delivery model.

After GST every message arrives within Δ. Before GST the adversary picks the
delay. Certificates are held until just after the receiver's round timer
fires, so pre-GST rounds keep failing. Everything else gets a seeded delay,
and no message sent before GST arrives later than GST + Δ.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

# Message kinds the pre-GST adversary holds past the receiver's deadline.
WORST_CASE_KINDS = frozenset({"cc", "finalize", "fallback"})


@dataclass(frozen=True)
class NetworkConfig:
    delta: int = 10
    gst: Optional[int] = 0
    drop_before_gst: bool = False
    reorder: bool = True
    # Bound on pre-GST delays, in Δ, when the network never stabilizes.
    unstable_horizon: int = 20

    def __post_init__(self):
        if self.delta < 1:
            raise ValueError("delta must be at least one tick")
        if self.gst is not None and self.gst < 0:
            raise ValueError("gst must be non-negative")

    def synchronous_at(self, now: int) -> bool:
        return self.gst is not None and now >= self.gst

    def horizon(self, now: int) -> int:
        if self.gst is None:
            return now + self.unstable_horizon * self.delta
        return self.gst + self.delta


class DeliveryModel:
    def __init__(self, config: NetworkConfig, rng: np.random.Generator):
        self.config = config
        self.rng = rng
        self._last_on_link: dict = {}

    def arrival(
        self,
        sender: int,
        receiver: int,
        now: int,
        kind: str,
        receiver_deadline: Optional[int] = None,
        delay_max: bool = False,
    ) -> Optional[int]:
        """Arrival time of a message sent at ``now``, or None if dropped."""
        cfg = self.config
        if cfg.synchronous_at(now):
            delay = cfg.delta if delay_max else int(self.rng.integers(1, cfg.delta + 1))
            at = now + delay
        else:
            if cfg.drop_before_gst:
                return None
            horizon = max(cfg.horizon(now), now + 1)
            if delay_max:
                at = horizon
            elif kind in WORST_CASE_KINDS and receiver_deadline is not None:
                at = min(max(now + 1, receiver_deadline + 1), horizon)
            else:
                at = now + int(self.rng.integers(1, horizon - now + 1))

        if not cfg.reorder:
            link = (sender, receiver)
            at = max(at, self._last_on_link.get(link, 0))
            self._last_on_link[link] = at
        return at
