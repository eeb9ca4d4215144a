"""Deterministic discrete-event simulation of a LinBFT network.

Replicas are passive handlers. The simulator owns the clock, the event queue,
the delivery model and the transmission log, and it interprets the actions
replicas return. It also checks the global safety property (one block per
height across honest replicas) while the run is in progress.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .accounting import BODY, CATCHUP, CONSENSUS, SETUP, SizeClass, TransmissionLog, TransmissionRecord
from .adversary import AdversaryPolicy, Behavior, ByzantineReplica
from .chain import ParticipantSet, StakeLedger
from .config import ScenarioConfig
from .cosi import build_tree, speculative_round
from .crypto import IdealCrypto
from .epochs import dkg_seed
from .errors import SafetyViolation
from .leaders import malicious_prefix, negligible_prefix
from .messages import CommitCert, CosiFinalize, FinalityProof, Message, Preprepare
from .network import DeliveryModel
from .replica import (
    EvidenceFound,
    Finalized,
    Ignored,
    KeysInstalled,
    Replica,
    Send,
    SetTimer,
    Slashed,
    StartSpeculation,
)
from .reports import EpochRecord, HeightRecord, RunReport

logger = logging.getLogger(__name__)


class EventKind(enum.IntEnum):
    EPOCH_BOUNDARY = 0
    DELIVER = 1
    INJECT = 2
    TIMER_FIRE = 3


@dataclass(order=True)
class SimEvent:
    """Queue entry. Ties at one timestamp break on (rush, kind, sender, receiver, seq)."""

    time: int
    rush: int
    kind: EventKind
    sender: int
    receiver: int
    seq: int
    payload: Any = field(default=None, compare=False)
    record: Optional[TransmissionRecord] = field(default=None, compare=False)


class Simulator:
    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.network = config.network
        self.params = config.protocol_params()
        self.delivery = self._delivery_model()
        self.crypto = IdealCrypto(config.seed)
        self.policy = AdversaryPolicy(config.adversary, config.seed)
        self.mempool = config.mempool()
        self.log = TransmissionLog()
        self.watchdog = config.watchdog
        self.queue: list = []
        self.now = 0
        self.timed_out = False
        self._seq = itertools.count()

        # (replica, id(msg)) -> (msg, record), so an Ignored action can
        # reach back to the delivery it refers to.
        self._inflight: dict = {}
        self._bodies_sent: set = set()
        self._installed: set = set()
        self._done_dirty = True
        self._all_done = False

        self.decided: dict = {}
        self.first_final_at: dict = {}
        self.finalized_by: dict = defaultdict(dict)
        self.max_round: dict = {}
        self.speculation: dict = {}
        self.pass_elapsed: dict = {}
        self.evidence: dict = {}
        self.slashes: dict = {}
        self.violations: list = []

        genesis = ParticipantSet.genesis(config.n, config.stake, config.f)
        keys, dkg_record = self.crypto.run_dkg(
            genesis,
            self.params.dkg_failure_prob,
            dkg_seed(config.seed, 0, 0),
            self.params.dkg_cost_constant,
        )
        exchange = TransmissionRecord(
            height=0, round=0, msg_kind="key_exchange", size_class=SizeClass.CONSTANT,
            n=genesis.n, count=genesis.n * (genesis.n - 1), channel=SETUP,
        )
        self.log.extend((dkg_record, exchange))
        self._installed.add((0, 0))
        self._set_history = [(1, genesis)]
        self.epochs = [EpochRecord(
            epoch=0, generation=0, start_height=1, n=genesis.n, t=keys.t,
            members=list(genesis.members), keys_valid=keys.valid,
            dkg_units=dkg_record.units, exchange_units=exchange.units,
        )]

        ledger = StakeLedger.genesis(genesis)
        self.replicas: dict = {
            node: self._make_replica(node, genesis, keys, ledger, None) for node in genesis.members
        }

    def _delivery_model(self) -> DeliveryModel:
        return DeliveryModel(self.network, np.random.default_rng([self.config.seed, 1]))

    def _make_replica(self, node, participants, keys, ledger, schedule) -> Replica:
        args = (node, participants, keys, self.crypto, self.params, self.mempool, ledger, schedule)
        if self.policy.may_corrupt(node):
            return ByzantineReplica(*args, policy=self.policy)
        return Replica(*args)

    # ---------- bookkeeping helpers ----------

    def _push(self, time: int, kind: EventKind, sender: int, receiver: int, payload=None,
              record: Optional[TransmissionRecord] = None, rush: int = 0) -> SimEvent:
        event = SimEvent(time, rush, kind, sender, receiver, next(self._seq), payload, record)
        heapq.heappush(self.queue, event)
        return event

    def participants_for(self, height: int) -> ParticipantSet:
        for start, participants in reversed(self._set_history):
            if start <= height:
                return participants
        return self._set_history[0][1]

    def _corrupted(self, height: int) -> frozenset:
        return self.policy.corrupted_at(height, self.participants_for(height))

    def _honest_at(self, node: int, height: int) -> bool:
        return node not in self._corrupted(height)

    def _statically_corrupt(self, node: int) -> bool:
        spec = self.config.adversary
        return not spec.rotate and node in spec.corrupted

    def _delay_max(self, sender: int, height: int) -> bool:
        participants = self.participants_for(height)
        return Behavior.DELAY_MAX in self.policy.behaviors(sender, height, participants)

    def _link_delay(self, height: int):
        def delay(sender, receiver, now) -> int:
            at = self.delivery.arrival(sender, receiver, now, "cosi", None, self._delay_max(sender, height))
            return self.watchdog if at is None else at - now

        return delay

    # ---------- delivery ----------

    def deliver(self, msg: Message, sender: int, receiver: int, now: int, counted: bool = True) -> Optional[SimEvent]:
        """Log one transmission and schedule its arrival; None if it never arrives."""
        h = msg.height
        target = self.replicas.get(receiver)
        participants = self.participants_for(h)
        deadline = None
        if target is not None and target.state is not None and target.state.height == h:
            deadline = target.state.timer_deadline
        at = self.delivery.arrival(sender, receiver, now, msg.kind, deadline, self._delay_max(sender, h))

        record = self.log.append(TransmissionRecord(
            height=h,
            round=msg.round,
            msg_kind=msg.kind,
            size_class=msg.size_class,
            n=participants.n,
            sender=sender,
            receiver=receiver,
            time=now,
            channel=msg.channel,
            counted_toward_completion=counted and at is not None and target is not None and not target.retired,
        ))
        if at is None or target is None:
            return None
        self._check_bound(now, at)
        rush = 1 if self.config.adversary.rushing and not self._honest_at(sender, h) else 0
        return self._push(at, EventKind.DELIVER, sender, receiver, msg, record, rush)

    def _check_bound(self, sent: int, at: int):
        cfg = self.network
        if cfg.gst is None:
            return
        limit = sent + cfg.delta if cfg.synchronous_at(sent) else max(cfg.gst + cfg.delta, sent + 1)
        if at > limit:
            raise SafetyViolation(f"delivery bound broken: sent at {sent}, arrives {at} > {limit}")

    # ---------- main loop ----------

    def run(self) -> RunReport:
        logger.info("scenario %s: n=%s f_actual=%s heights=%s seed=%s",
                    self.config.name, self.config.n, self.config.f_actual,
                    self.config.num_heights, self.config.seed)
        for node in sorted(self.replicas):
            self._process(node, self.replicas[node].start(self.config.genesis_seed, now=0))

        while self.queue and not self.violations:
            if self._done():
                break
            event = heapq.heappop(self.queue)
            if event.time > self.watchdog:
                self.timed_out = True
                logger.warning("scenario %s: watchdog expired at t=%s", self.config.name, self.watchdog)
                break
            self.now = event.time
            self._fire(event)

        report = self.report()
        logger.info("scenario %s finished at t=%s: safety %s, liveness %s",
                    self.config.name, report.finished_at, report.safety_ok, report.liveness_ok)
        return report

    def _done(self) -> bool:
        if self._done_dirty:
            self._done_dirty = False
            self._all_done = all(replica.done for replica in self._expected())
        return self._all_done

    def _expected(self) -> list:
        return [
            replica for node, replica in sorted(self.replicas.items())
            if not replica.retired and not self._statically_corrupt(node)
        ]

    def _fire(self, event: SimEvent):
        node = event.receiver
        replica = self.replicas.get(node)
        if event.kind is EventKind.INJECT and event.payload[0] == "speculate":
            self._run_speculation(event.sender, event.payload[1])
            return
        if replica is None:
            return
        if event.kind is EventKind.DELIVER:
            msg = event.payload
            if event.record is not None:
                self._inflight[(node, id(msg))] = (msg, event.record)
            actions = replica.handle(msg, now=event.time)
        elif event.kind is EventKind.TIMER_FIRE:
            height, round = event.payload
            actions = replica.on_timeout(height, round, now=event.time)
        elif event.kind is EventKind.INJECT:
            actions = replica.on_speculation_failed(event.payload[1], now=event.time)
        else:
            actions = replica.start(event.payload, now=event.time)
        self._process(node, actions)

    # ---------- actions ----------

    def _process(self, node: int, actions: list):
        replica = self.replicas[node]
        for action in actions:
            if isinstance(action, Send):
                self._on_send(replica, action)
            elif isinstance(action, Ignored):
                entry = self._inflight.get((node, id(action.msg)))
                if entry is not None and entry[0] is action.msg:
                    entry[1].counted_toward_completion = False
            elif isinstance(action, SetTimer):
                self._push(action.deadline, EventKind.TIMER_FIRE, node, node, (action.height, action.round))
                if self._honest_at(node, action.height):
                    self.max_round[action.height] = max(self.max_round.get(action.height, 1), action.round)
            elif isinstance(action, Finalized):
                self._on_finalized(replica, action)
            elif isinstance(action, EvidenceFound):
                self.evidence.setdefault(action.evidence.fingerprint, action.evidence)
            elif isinstance(action, Slashed):
                self.slashes.setdefault(action.record.node, action.record)
            elif isinstance(action, KeysInstalled):
                self._on_keys(replica, action)
            elif isinstance(action, StartSpeculation):
                tree_wait = build_tree(replica.participants, self.config.cosi_fanout).depth * self.network.delta
                # The tree passes start once the announcement has settled at every node.
                self._push(self.now + tree_wait, EventKind.INJECT, node, node, ("speculate", action.proposal))
        if replica.retired or replica.done:
            self._done_dirty = True

    def _on_send(self, replica: Replica, send: Send):
        msg = send.msg
        if isinstance(msg, Preprepare):
            self._record_body(msg, replica.node, send.counted)
        if send.to is None:
            targets = [m for m in self.participants_for(msg.height).members if m != replica.node]
        else:
            targets = [send.to]
        for target in targets:
            self.deliver(msg, replica.node, target, self.now, counted=send.counted)

    def _record_body(self, msg: Preprepare, sender: int, counted: bool):
        key = (sender, msg.block.digest)
        if key in self._bodies_sent:
            return
        self._bodies_sent.add(key)
        self.log.append(TransmissionRecord(
            height=msg.height, round=msg.round, msg_kind="block_body", size_class=SizeClass.LINEAR,
            n=self.participants_for(msg.height).n, sender=sender, time=self.now, channel=BODY,
            counted_toward_completion=counted,
        ))

    def _on_finalized(self, replica: Replica, fin: Finalized):
        h, node = fin.height, replica.node
        self.finalized_by[h][node] = self.now
        self._done_dirty = True
        if not self._honest_at(node, h):
            return
        prior = self.decided.get(h)
        if prior is None:
            self.decided[h] = fin
            self.first_final_at[h] = self.now
            parent = self.decided.get(h - 1)
            if parent is not None and fin.block.parent_hash != parent.block.digest:
                self._violation(f"height {h}: block {fin.block.digest!r} does not extend {parent.block.digest!r}")
        elif prior.block.digest != fin.block.digest:
            self._violation(
                f"height {h}: node {node} finalized {fin.block.digest!r}, another honest node {prior.block.digest!r}"
            )

    def _violation(self, message: str):
        logger.error("SAFETY VIOLATION at t=%s: %s", self.now, message)
        self.violations.append(message)

    def _on_keys(self, source: Replica, installed: KeysInstalled):
        key = (installed.participants.epoch, installed.keys.generation)
        if key in self._installed:
            return
        self._installed.add(key)
        self.log.extend(installed.records)

        previous = self.participants_for(installed.height - 1)
        new = installed.participants
        self._set_history.append((installed.height, new))
        joined = [m for m in new.members if m not in previous.members]
        left = [m for m in previous.members if m not in new.members]
        self.epochs.append(EpochRecord(
            epoch=new.epoch,
            generation=installed.keys.generation,
            start_height=installed.height,
            n=new.n,
            t=installed.keys.t,
            members=list(new.members),
            keys_valid=installed.keys.valid,
            dkg_units=sum(r.units for r in installed.records if r.msg_kind == "dkg"),
            exchange_units=sum(r.units for r in installed.records if r.msg_kind == "key_exchange"),
            joined=joined,
            left=left,
        ))
        for node in joined:
            self._spawn_joiner(node, source, installed)

    def _spawn_joiner(self, node: int, source: Replica, installed: KeysInstalled):
        seed = source.seeds.get(installed.height)
        existing = self.replicas.get(node)
        if seed is None or source.done or (existing is not None and not existing.retired):
            return
        joiner = self._make_replica(node, installed.participants, installed.keys, source.ledger, source.schedule)
        joiner.adopt(source)
        self.replicas[node] = joiner
        self._done_dirty = True
        logger.info("node %s joins at height %s with %s blocks", node, installed.height, len(joiner.chain))
        self._push(self.now, EventKind.EPOCH_BOUNDARY, source.node, node, seed)

    # ---------- speculative path ----------

    def _run_speculation(self, leader_node: int, proposal: Preprepare):
        leader = self.replicas[leader_node]
        h = proposal.height
        st = leader.state
        if leader.retired or st.height != h or st.speculative_proposal is not proposal:
            return
        participants = self.participants_for(h)
        keys = leader.keys
        tree = build_tree(participants, self.config.cosi_fanout, seed=leader.seeds[h], root=leader_node)
        link_delay = self._link_delay(h)
        self._record_body(proposal, leader_node, True)

        def live(node):
            replica = self.replicas.get(node)
            return replica if replica is not None and not replica.retired and replica.state is not None else None

        first = speculative_round(
            tree, proposal.block.digest,
            lambda node: live(node).cosi_prepare(proposal) if live(node) else None,
            self.crypto, keys, link_delay, self.network.delta, h, self.now, "prepare",
        )
        self.log.extend(first.records)
        if not first.succeeded:
            self._speculation_failed(leader_node, h, first, link_delay)
            return

        cc = CommitCert(h, 1, proposal.block.digest, ts=self.crypto.combine_threshold(list(first.shares.values()), keys))
        second = speculative_round(
            tree, cc.digest,
            lambda node: live(node).cosi_commit(cc) if live(node) else None,
            self.crypto, keys, link_delay, self.network.delta, h, first.finished, "commit",
        )
        self.log.extend(second.records)
        if not second.succeeded:
            self._speculation_failed(leader_node, h, second, link_delay)
            return

        ts_cc = self.crypto.combine_threshold(list(second.shares.values()), keys)
        msg = CosiFinalize(leader_node, h, proposal.block, FinalityProof(cc, ts_cc=ts_cc, ms_cc=second.outcome.signature))
        self.speculation[h] = "success"
        self.pass_elapsed[h] = [first.elapsed, second.elapsed]
        logger.debug("speculation at height %s succeeded: passes took %s and %s", h, first.elapsed, second.elapsed)

        reached = {leader_node: second.finished}
        for node in tree.order[1:]:
            parent = tree.parents[node]
            sent = reached[parent]
            reached[node] = sent + link_delay(parent, node, sent)
            record = self.log.append(TransmissionRecord(
                height=h, round=1, msg_kind=msg.kind, size_class=msg.size_class, n=tree.n,
                sender=parent, receiver=node, time=sent,
            ))
            self._push(reached[node], EventKind.DELIVER, parent, node, msg, record)
        self._push(second.finished, EventKind.DELIVER, leader_node, leader_node, msg)

    def _speculation_failed(self, leader_node: int, height: int, spass, link_delay):
        self.speculation[height] = "fallback"
        reporter = spass.outcome.reporter
        at = spass.finished
        if reporter != leader_node:
            self.log.append(TransmissionRecord(
                height=height, round=1, msg_kind="cosi_report", size_class=SizeClass.CONSTANT,
                n=self.participants_for(height).n, sender=reporter, receiver=leader_node, time=at,
            ))
            at += link_delay(reporter, leader_node, at)
        self._push(at, EventKind.INJECT, reporter, leader_node, ("failed", height))

    # ---------- report ----------

    def _seed_for(self, height: int):
        for _, replica in sorted(self.replicas.items()):
            seed = replica.seeds.get(height)
            if seed is not None:
                return seed
        return None

    def report(self) -> RunReport:
        cfg = self.config
        by_height = defaultdict(list)
        for record in self.log.records:
            by_height[record.height].append(record)
        expected = [r.node for r in self._expected()]

        heights = []
        for h in range(1, cfg.num_heights + 1):
            participants = self.participants_for(h)
            row = HeightRecord(height=h, epoch=participants.epoch, n=participants.n)
            fin = self.decided.get(h)
            if fin is not None:
                row.block_hash = fin.block.digest.hex()
                row.proposer = fin.block.proposer
                row.rounds_used = fin.proof.cc.round
                row.finalized_at = self.first_final_at[h]
                row.path = "speculative" if fin.speculative else "fallback" if fin.proof.fallback else "collector"
                times = self.finalized_by.get(h, {})
                if all(node in times for node in expected):
                    row.all_finalized_at = max((times[node] for node in expected), default=row.finalized_at)
            row.max_round = self.max_round.get(h, 1)
            if cfg.speculative:
                row.speculation = self.speculation.get(h, "skipped")
            row.pass_elapsed = self.pass_elapsed.get(h, [])

            for record in by_height.get(h, ()):
                if record.channel == SETUP:
                    row.setup_units += record.units
                elif not record.counted_toward_completion:
                    if record.channel == CONSENSUS:
                        row.ignored += record.count
                elif record.channel == CONSENSUS:
                    row.consensus_units += record.units
                    row.messages += record.count
                    if record.size_class is SizeClass.LINEAR:
                        row.linear_units += record.units
                    else:
                        row.constant_units += record.units
                elif record.channel == BODY:
                    row.body_units += record.units
                elif record.channel == CATCHUP:
                    row.catchup_units += record.units

            row.evidence = sum(1 for ev in self.evidence.values() if ev.height == h)
            row.slashed = sorted(s.node for s in self.slashes.values() if s.height == h)
            seed = self._seed_for(h)
            if seed is not None:
                row.malicious_prefix = malicious_prefix(
                    h, seed, participants, self._corrupted(h), self.params.leader_mode
                )
            heights.append(row)

        liveness_ok = not self.timed_out and all(row.finalized for row in heights) and self._done()
        return RunReport(
            name=cfg.name,
            seed=cfg.seed,
            n=cfg.n,
            f=cfg.effective_f,
            f_actual=cfg.f_actual,
            num_heights=cfg.num_heights,
            heights=heights,
            epochs=self.epochs,
            safety_ok=not self.violations,
            liveness_ok=liveness_ok,
            liveness_required=self.network.gst is not None,
            finished_at=self.now,
            timed_out=self.timed_out,
            violations=list(self.violations),
            totals={channel: self.log.total_units(channel) for channel in (CONSENSUS, BODY, CATCHUP, SETUP)},
            slashes=[
                {"node": s.node, "height": s.height, "kind": s.evidence.kind.value, "amount": s.amount}
                for _, s in sorted(self.slashes.items())
            ],
            negligible_prefix=negligible_prefix(cfg.rho),
            config=cfg.as_dict(),
        )


def run_scenario(config: ScenarioConfig, raise_on_violation: bool = True) -> RunReport:
    """Simulate ``config.num_heights`` heights and return the run report.

    A safety violation is a bug in the protocol implementation; it raises
    :class:`SafetyViolation` carrying the report unless ``raise_on_violation``
    is off.
    """
    report = Simulator(config.validate()).run()
    if not report.safety_ok and raise_on_violation:
        raise SafetyViolation("; ".join(report.violations), report=report)
    return report
