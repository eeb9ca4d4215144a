"""Static rushing adversary with per-height corruption.

A corrupted node runs :class:`ByzantineReplica`, the honest state machine
with hooks overridden for the behaviours assigned to it. Behaviours apply
only at heights where the node is corrupted.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .chain import ParticipantSet, Transaction
from .crypto import ThresholdSignature
from .digest import NodeId, hash_fields
from .messages import CCBroadcast, CommitCert, Preprepare
from .replica import Replica

logger = logging.getLogger(__name__)


class Behavior(enum.Enum):
    SILENT_LEADER = "silent_leader"
    EQUIVOCATE = "equivocate"
    DELAY_MAX = "delay_max"
    VOTE_WITHHOLD = "vote_withhold"
    FORGE_CERT = "forge_cert"
    INVALID_PROPOSAL = "invalid_proposal"
    NON_LEADER_PROPOSE = "non_leader_propose"


@dataclass(frozen=True)
class AdversarySpec:
    corrupted: frozenset = frozenset()
    behaviors: tuple = (Behavior.SILENT_LEADER,)
    # Per-node overrides of ``behaviors``: ((node, (Behavior, ...)), ...).
    per_node: tuple = ()
    rushing: bool = True
    rotate: bool = False
    rotate_count: Optional[int] = None
    invalid_tx_heights: frozenset = frozenset()

    def behaviors_of(self, node: NodeId) -> frozenset:
        for who, behaviors in self.per_node:
            if who == node:
                return frozenset(behaviors)
        return frozenset(self.behaviors)


class AdversaryPolicy:
    """Decides who is corrupted at each height and how they misbehave."""

    def __init__(self, spec: AdversarySpec, seed: int):
        self.spec = spec
        self.seed = seed
        self._cache: dict = {}

    def may_corrupt(self, node: NodeId) -> bool:
        return self.spec.rotate or node in self.spec.corrupted

    def corrupted_at(self, height: int, participants: ParticipantSet) -> frozenset:
        key = (height, participants.members)
        if key not in self._cache:
            self._cache[key] = self._choose(height, participants)
        return self._cache[key]

    def _choose(self, height: int, participants: ParticipantSet) -> frozenset:
        members = participants.members
        if not self.spec.rotate:
            return frozenset(node for node in self.spec.corrupted if node in members)
        count = self.spec.rotate_count
        if count is None:
            count = len(self.spec.corrupted)
        count = min(count, participants.f)
        if count <= 0:
            return frozenset()
        rng = np.random.default_rng([self.seed, height])
        picked = rng.choice(len(members), size=count, replace=False)
        return frozenset(members[int(i)] for i in picked)

    def behaviors(self, node: NodeId, height: int, participants: ParticipantSet) -> frozenset:
        if node not in self.corrupted_at(height, participants):
            return frozenset()
        return self.spec.behaviors_of(node)


class ByzantineReplica(Replica):
    def __init__(self, *args, policy: AdversaryPolicy, **kwargs):
        super().__init__(*args, **kwargs)
        self.policy = policy

    @property
    def behaviors(self) -> frozenset:
        if self.state is None:
            return frozenset()
        return self.policy.behaviors(self.node, self.state.height, self.participants)

    def _has(self, behavior: Behavior) -> bool:
        return behavior in self.behaviors

    # ---------- leader ----------

    def _propose(self, round, highest_cc, view_cert):
        if self._has(Behavior.SILENT_LEADER):
            logger.debug("byzantine node %s stays silent as leader of round %s", self.node, round)
            self.state.proposed_rounds.add(round)
            return
        super()._propose(round, highest_cc, view_cert)

    def _build_block(self, round: int):
        block = super()._build_block(round)
        heights = self.policy.spec.invalid_tx_heights
        if self._has(Behavior.INVALID_PROPOSAL) and (not heights or block.height in heights):
            bad = Transaction.transfer(hash_fields("invalid", block.height, round).value, valid=False)
            keep = block.txs[: self.params.rules.max_txs - 1]
            block = replace(block, txs=(bad,) + keep)
        return block

    def _broadcast_proposal(self, msg: Preprepare):
        if not self._has(Behavior.EQUIVOCATE) or msg.highest_cc is not None:
            super()._broadcast_proposal(msg)
            return
        twin_block = replace(
            msg.block,
            txs=(Transaction.transfer(hash_fields("twin", msg.height, msg.round).value),)
            + msg.block.txs[: self.params.rules.max_txs - 1],
        )
        twin = self._make_preprepare(msg.round, twin_block, None, msg.view_cert)
        self.state.proposals[msg.round] = msg
        for peer in self.participants.members:
            if peer == self.node:
                continue
            flip = hash_fields("order", msg.height, msg.round, peer).value[0] & 1
            first, second = (twin, msg) if flip else (msg, twin)
            self._send(peer, first)
            self._send(peer, second)
        logger.debug("byzantine node %s equivocates at height %s round %s", self.node, msg.height, msg.round)
        self._consider_proposal(msg)

    def _emit_cc(self, round, block_hash, shares):
        if not self._has(Behavior.SILENT_LEADER):
            super()._emit_cc(round, block_hash, shares)

    def _emit_finalize(self, cc, shares):
        if not self._has(Behavior.SILENT_LEADER):
            super()._emit_finalize(cc, shares)

    # ---------- voter ----------

    def _send_prepare_vote(self, round, block_hash):
        if self._has(Behavior.VOTE_WITHHOLD):
            self.state.voted_rounds.add(round)
            return
        super()._send_prepare_vote(round, block_hash)

    def _send_commit_vote(self, cc):
        if self._has(Behavior.VOTE_WITHHOLD):
            self.state.commit_voted_rounds.add(cc.round)
            return
        super()._send_commit_vote(cc)

    def _send_new_view(self, round):
        if not self._has(Behavior.VOTE_WITHHOLD):
            super()._send_new_view(round)

    def cosi_prepare(self, proposal):
        if self._has(Behavior.VOTE_WITHHOLD):
            return None
        return super().cosi_prepare(proposal)

    def cosi_commit(self, cc):
        if self._has(Behavior.VOTE_WITHHOLD):
            return None
        return super().cosi_commit(cc)

    # ---------- noise ----------

    def _on_round_start(self, round: int):
        st = self.state
        if self._has(Behavior.FORGE_CERT):
            target = hash_fields("forged-block", st.height, round, self.node)
            fake_ts = ThresholdSignature(
                digest=target,
                epoch=self.keys.epoch,
                proof=hash_fields("forged-ts", st.height, round, self.node).value,
                generation=self.keys.generation,
            )
            forged = CommitCert(st.height, round, target, ts=fake_ts)
            self._send(None, CCBroadcast(self.node, st.height, forged), counted=False)
        if self._has(Behavior.NON_LEADER_PROPOSE) and self.leader(round) != self.node:
            block = self._build_block(round)
            self._send(None, self._make_preprepare(round, block, None, None), counted=False)
