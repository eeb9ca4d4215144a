"""Leader selection from the per-height VRF seed.

Modular mode samples with replacement, ``H(seed ‖ round) mod n``. Permutation
mode shuffles the members once per height with Fisher–Yates driven by the
same seed and walks the permutation round-robin, so each member leads exactly
once in any n consecutive rounds.
"""

from __future__ import annotations

import enum
from functools import lru_cache
from typing import TYPE_CHECKING

import numpy as np

from .crypto import vrf_output
from .digest import HashDigest, NodeId, hash_fields

if TYPE_CHECKING:
    from .chain import ParticipantSet


class LeaderMode(enum.Enum):
    MODULAR = "modular"
    PERMUTATION = "permutation"


@lru_cache(maxsize=4096)
def leader_permutation(seed: HashDigest, members: tuple) -> tuple:
    order = list(members)
    for i in range(len(order) - 1, 0, -1):
        j = hash_fields("perm", seed, i).as_int() % (i + 1)
        order[i], order[j] = order[j], order[i]
    return tuple(order)


def leader_for(
    height: int,
    round: int,
    seed: HashDigest,
    participants: "ParticipantSet",
    mode: LeaderMode = LeaderMode.PERMUTATION,
) -> NodeId:
    members = participants.members
    n = len(members)
    if n == 1:
        return members[0]
    if mode is LeaderMode.MODULAR:
        return members[vrf_output(seed, round).as_int() % n]
    return leader_permutation(seed, members)[(round - 1) % n]


def leader_schedule(seed: HashDigest, participants: "ParticipantSet", rounds: int, mode: LeaderMode) -> list:
    """Leaders of rounds 1..rounds at one height."""
    return [leader_for(0, r, seed, participants, mode) for r in range(1, rounds + 1)]


def malicious_prefix(
    height: int,
    seed: HashDigest,
    participants: "ParticipantSet",
    corrupted: frozenset,
    mode: LeaderMode = LeaderMode.PERMUTATION,
    limit: int = 64,
) -> int:
    """Number of consecutive corrupted leaders from round 1 on."""
    prefix = 0
    while prefix < limit and leader_for(height, prefix + 1, seed, participants, mode) in corrupted:
        prefix += 1
    return prefix


def negligible_prefix(rho: float) -> int:
    """Smallest x with 3^-x <= rho: longer malicious prefixes are negligible."""
    return int(np.ceil(-np.log(rho) / np.log(3.0) - 1e-9))
