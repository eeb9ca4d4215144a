"""LinBFT replica state machine.

A :class:`Replica` never touches a clock or a socket. Every handler returns a
list of actions (:class:`Send`, :class:`SetTimer`, :class:`Finalized`, ...)
that the simulator interprets. Adversarial input never raises: it is logged
and answered with :class:`Ignored` so the delivery drops out of the cost
accounting.

The leader of a round is also its collector. It gathers PrepareVotes into a
commit certificate (CC), CommitVotes into ts(CC), and NewViews into the view
certificate that justifies its proposal in later rounds.
"""

from __future__ import annotations

import enum
import functools
import logging
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

from .chain import (
    GENESIS_PARENT,
    Block,
    BlockRules,
    EvidenceKind,
    ParticipantSet,
    SlashEvidence,
    SlashRecord,
    StakeLedger,
    apply_slash,
    first_invalid_tx,
    proposal_digest,
    verify_evidence,
)
from .cosi import DEFAULT_FANOUT, tree_depth
from .crypto import IdealCrypto, Signature, ThresholdKeySet
from .digest import HashDigest, NodeId, hash_fields
from .epochs import EpochSchedule, dkg_seed, epoch_transition, ingest_finalized_block
from .errors import (
    DkgFailed,
    DuplicateMessage,
    Equivocation,
    InvalidBlockContent,
    InvalidCert,
    InvalidEvidence,
    InvalidSignature,
    InvalidTransaction,
    InvalidTs,
    NotAMember,
    NotCollector,
    NotLeader,
    ProtocolError,
    SetTooSmall,
    StaleRound,
    UnexpectedMessage,
    WrongLeader,
)
from .leaders import LeaderMode, leader_for
from .mempool import Mempool
from .messages import (
    BlockBody,
    BlockRequest,
    CCBroadcast,
    CommitCert,
    CommitVote,
    CosiFinalize,
    Decision,
    FallbackBroadcast,
    FinalityProof,
    FinalizeBroadcast,
    Message,
    NewView,
    Preprepare,
    PrepareVote,
    Stage,
    ViewCert,
    new_view_digest,
)

logger = logging.getLogger(__name__)

GENESIS_SEED = hash_fields("genesis-seed")


class Phase(enum.Enum):
    IDLE = "idle"
    PREPARED_SENT = "prepared-sent"
    LOCKED = "locked"
    FINALIZED = "finalized"


# ---------- actions ----------


@dataclass(frozen=True)
class Send:
    """``to=None`` broadcasts to every other member of the sender's set."""

    to: Optional[NodeId]
    msg: Message
    counted: bool = True


@dataclass(frozen=True)
class SetTimer:
    height: int
    round: int
    deadline: int


@dataclass(frozen=True)
class Finalized:
    height: int
    block: Block
    proof: FinalityProof
    speculative: bool = False


@dataclass(frozen=True)
class Ignored:
    """A dropped delivery. ``error`` is the ProtocolError subclass naming the condition."""

    reason: str
    msg: Optional[Message] = None
    error: type = ProtocolError


@dataclass(frozen=True)
class EvidenceFound:
    evidence: SlashEvidence


@dataclass(frozen=True)
class Slashed:
    record: SlashRecord


@dataclass(frozen=True)
class KeysInstalled:
    """New keys (and maybe a new participant set) from ``height`` on."""

    height: int
    participants: ParticipantSet
    keys: ThresholdKeySet
    records: tuple = ()


@dataclass(frozen=True)
class StartSpeculation:
    proposal: Preprepare


# ---------- parameters and per-height state ----------


@dataclass(frozen=True)
class ProtocolParams:
    delta: int = 10
    timeout_deltas: int = 6
    leader_mode: LeaderMode = LeaderMode.PERMUTATION
    speculative: bool = False
    cosi_fanout: int = DEFAULT_FANOUT
    buffer_capacity: int = 1024
    max_height: int = 10
    epoch_length: int = 16
    rules: BlockRules = BlockRules()
    dkg_failure_prob: float = 0.0
    dkg_cost_constant: int = 1
    run_seed: int = 0

    def round_timeout(self, round: int, n: int) -> int:
        timeout = self.timeout_deltas * self.delta * 2 ** (round - 1)
        if round == 1 and self.speculative and n > 1:
            timeout += 8 * tree_depth(n, self.cosi_fanout) * self.delta
        return timeout


@dataclass
class ReplicaState:
    """Consensus state of one replica at one height."""

    node: NodeId
    height: int
    leader_schedule_seed: HashDigest
    round: int = 1
    phase: Phase = Phase.IDLE
    locked_cc: Optional[CommitCert] = None
    timer_deadline: int = 0
    voted_rounds: set = field(default_factory=set)
    commit_voted_rounds: set = field(default_factory=set)
    proposed_rounds: set = field(default_factory=set)
    proposals: dict = field(default_factory=dict)
    blocks: dict = field(default_factory=dict)
    prepare_votes: dict = field(default_factory=dict)
    commit_votes: dict = field(default_factory=dict)
    new_views: dict = field(default_factory=dict)
    cc_by_round: dict = field(default_factory=dict)
    finalize_sent: set = field(default_factory=set)
    speculated: Optional[HashDigest] = None
    speculative_proposal: Optional[Preprepare] = None
    awaiting_body: Optional[tuple] = None
    waiting_proposal: Optional[tuple] = None


def _collects(method):
    """Run ``method`` and return the actions it emitted.

    Nested handler calls append to the outermost call's list.
    """

    @functools.wraps(method)
    def wrapper(self, *args, now: Optional[int] = None, **kwargs):
        if self._actions is not None:
            method(self, *args, **kwargs)
            return []
        if now is not None:
            self.now = now
        self._actions = []
        try:
            method(self, *args, **kwargs)
            return self._actions
        finally:
            self._actions = None

    return wrapper


_ROUND_BOUND = (PrepareVote, CCBroadcast, CommitVote)


class Replica:
    """One honest LinBFT node."""

    def __init__(
        self,
        node: NodeId,
        participants: ParticipantSet,
        keys: ThresholdKeySet,
        crypto: IdealCrypto,
        params: ProtocolParams,
        mempool: Optional[Mempool] = None,
        ledger: Optional[StakeLedger] = None,
        schedule: Optional[EpochSchedule] = None,
    ):
        self.node = node
        self.participants = participants
        self.keys = keys
        self.crypto = crypto
        self.params = params
        self.mempool = mempool or Mempool(seed=params.run_seed)
        self.ledger = ledger or StakeLedger.genesis(participants)
        self.schedule = schedule or EpochSchedule(params.epoch_length, participants.epoch)

        self.chain: list = []
        self.proofs: dict = {}
        self.seeds: dict = {}
        self.included: set = set()
        self.evidence_pool: dict = {}
        self.evidence_seen: set = set()
        self.decisions_sent: set = set()
        self.pending: deque = deque(maxlen=params.buffer_capacity)
        self.state: Optional[ReplicaState] = None
        self.done = False
        self.retired = False
        self.now = 0

        self._actions: Optional[list] = None
        self._draining = False
        self._redrain = False

    def __repr__(self):
        height = self.state.height if self.state else 0
        return f"<{type(self).__name__} node={self.node} height={height}>"

    # ---------- helpers ----------

    @property
    def tip_hash(self) -> HashDigest:
        return self.chain[-1].digest if self.chain else GENESIS_PARENT

    @property
    def finalized_height(self) -> int:
        return len(self.chain)

    def leader(self, round: int, height: Optional[int] = None) -> NodeId:
        st = self.state
        return leader_for(
            st.height if height is None else height,
            round,
            st.leader_schedule_seed,
            self.participants,
            self.params.leader_mode,
        )

    def _emit(self, action):
        self._actions.append(action)

    def _send(self, to, msg: Message, counted: bool = True):
        self._emit(Send(to, msg, counted))

    def _ignore(self, msg: Optional[Message], error: ProtocolError):
        logger.debug("node %s ignored %s: %s", self.node, msg.kind if msg else "input", error)
        self._emit(Ignored(str(error), msg, type(error)))

    def _sign(self, digest: HashDigest) -> Signature:
        return self.crypto.sign(self.keys, self.node, digest)

    def _share_ok(self, share: Signature, signer: NodeId, digest: HashDigest) -> bool:
        return (
            share.signer == signer
            and share.digest == digest
            and self.participants.can_vote(signer)
            and self.crypto.verify(share, self.keys)
        )

    def _quorum_of(self, shares, digest: HashDigest) -> bool:
        signers = {
            s.signer for s in shares
            if s.digest == digest and self.participants.can_vote(s.signer) and self.crypto.verify(s, self.keys)
        }
        return len(signers) >= self.participants.quorum

    def _cc_valid(self, cc: CommitCert) -> bool:
        if cc.height != self.state.height:
            return False
        if cc.ts is not None:
            return self.crypto.verify_threshold(cc.ts, cc.block_hash, self.keys)
        return self._quorum_of(cc.shares, cc.block_hash)

    def _view_cert_valid(self, vc: Optional[ViewCert], round: int) -> bool:
        if vc is None or vc.height != self.state.height or vc.round != round:
            return False
        if vc.ts is not None:
            return self.crypto.verify_threshold(vc.ts, vc.digest, self.keys)
        return self._quorum_of(vc.shares, vc.digest)

    def _proof_valid(self, proof: FinalityProof) -> bool:
        if not self._cc_valid(proof.cc):
            return False
        if proof.ts_cc is not None:
            return self.crypto.verify_threshold(proof.ts_cc, proof.cc.digest, self.keys)
        return self._quorum_of(proof.commit_shares, proof.cc.digest)

    def _proposal_signed(self, msg: Preprepare) -> bool:
        sig = msg.signature
        return (
            sig.signer == msg.sender
            and sig.digest == proposal_digest(msg.height, msg.round, msg.block.digest)
            and self.crypto.verify(sig, self.keys)
        )

    def _combine_or_shares(self, shares: tuple):
        """ts over the shares' digest, or None when the keyset is unusable."""
        try:
            return self.crypto.combine_threshold(list(shares), self.keys)
        except DkgFailed:
            return None

    # ---------- lifecycle ----------

    @_collects
    def start(self, seed: HashDigest = GENESIS_SEED):
        self._start_height(self.finalized_height + 1, seed)

    def adopt(self, source: "Replica"):
        """State transfer for a joiner: copy ``source``'s finalized chain."""
        self.chain = list(source.chain)
        self.proofs = dict(source.proofs)
        self.seeds = dict(source.seeds)
        self.included = set(source.included)
        self.now = source.now

    def _start_height(self, height: int, seed: HashDigest):
        self.state = ReplicaState(node=self.node, height=height, leader_schedule_seed=seed)
        self.seeds[height] = seed
        self._arm_timer(1)
        self._on_round_start(1)
        if self.leader(1) == self.node:
            self._propose(1, None, None)
        self._drain_pending()

    def _arm_timer(self, round: int):
        st = self.state
        st.timer_deadline = self.now + self.params.round_timeout(round, self.participants.n)
        self._emit(SetTimer(st.height, round, st.timer_deadline))

    def _on_round_start(self, round: int):
        pass

    # ---------- routing ----------

    @_collects
    def handle(self, msg: Message):
        if self.retired:
            self._ignore(msg, UnexpectedMessage("retired"))
            return
        if isinstance(msg, BlockRequest):
            self.on_block_request(msg)
            return
        st = self.state
        if msg.height < st.height or (msg.height == st.height and st.phase is Phase.FINALIZED):
            self._on_settled_height(msg)
        elif msg.height > st.height:
            self._buffer(msg)
        else:
            self._dispatch(msg)

    def _dispatch(self, msg: Message):
        handler = {
            Preprepare: self.on_preprepare,
            PrepareVote: self.on_prepare_vote,
            CCBroadcast: self.on_cc_broadcast,
            CommitVote: self.on_commit_vote,
            FinalizeBroadcast: self.on_finalize,
            NewView: self.on_new_view,
            FallbackBroadcast: self.on_fallback,
            BlockBody: self.on_block_body,
            Decision: self.on_decision,
            CosiFinalize: self.on_cosi_finalize,
        }.get(type(msg))
        if handler is None:
            self._ignore(msg, UnexpectedMessage("unknown message"))
        else:
            handler(msg)

    def _on_settled_height(self, msg: Message):
        # A NewView for a settled height means the sender is stuck there.
        if not isinstance(msg, NewView) or msg.height not in self.proofs:
            return
        key = (msg.sender, msg.height)
        if key in self.decisions_sent:
            return
        self.decisions_sent.add(key)
        block = self.chain[msg.height - 1]
        self._send(msg.sender, Decision(self.node, msg.height, block, self.proofs[msg.height]))
        logger.debug("node %s sent catch-up for height %s to %s", self.node, msg.height, msg.sender)

    def _buffer(self, msg: Message):
        if len(self.pending) == self.pending.maxlen:
            logger.warning("node %s buffer full, dropping oldest message", self.node)
        self.pending.append(msg)

    def _ready(self, msg: Message) -> bool:
        st = self.state
        if msg.height != st.height:
            return msg.height < st.height
        if isinstance(msg, _ROUND_BOUND) or (isinstance(msg, FallbackBroadcast) and msg.stage is Stage.PREPARE):
            return msg.round <= st.round
        return True

    def _drain_pending(self):
        if self._draining:
            self._redrain = True
            return
        self._draining = True
        try:
            while True:
                self._redrain = False
                ready = [m for m in self.pending if self._ready(m)]
                if not ready:
                    break
                waiting = [m for m in self.pending if not self._ready(m)]
                self.pending = deque(waiting, maxlen=self.params.buffer_capacity)
                for msg in ready:
                    self.handle(msg)
        finally:
            self._draining = False

    # ---------- proposal ----------

    @_collects
    def on_propose(self):
        st = self.state
        if self.leader(st.round) != self.node:
            raise NotLeader(f"node {self.node} does not lead round {st.round} at height {st.height}")
        if st.round == 1:
            self._propose(1, None, None)
        else:
            bucket = st.new_views.get(st.round, {})
            if len(bucket) >= self.participants.quorum:
                self._propose_from_views(st.round, bucket)

    def _build_block(self, round: int) -> Block:
        st = self.state
        txs = self.mempool.candidates(st.height, self.included)[: self.params.rules.max_txs]
        evidence = tuple(
            ev for _, ev in sorted(self.evidence_pool.items())
            if ev.offender not in self.ledger.slashed_nodes()
        )
        return Block(st.height, self.tip_hash, self.node, round, tuple(txs), evidence)

    def _make_preprepare(self, round, block, highest_cc, view_cert) -> Preprepare:
        h = self.state.height
        return Preprepare(
            sender=self.node,
            height=h,
            msg_round=round,
            block=block,
            signature=self._sign(proposal_digest(h, round, block.digest)),
            highest_cc=highest_cc,
            view_cert=view_cert,
        )

    def _propose(self, round: int, highest_cc: Optional[CommitCert], view_cert: Optional[ViewCert]):
        st = self.state
        if round in st.proposed_rounds:
            return
        if highest_cc is not None:
            block = st.blocks.get(highest_cc.block_hash)
            if block is None:
                st.waiting_proposal = (round, highest_cc, view_cert)
                self._send(None, BlockRequest(self.node, st.height, highest_cc.block_hash))
                return
        else:
            block = self._build_block(round)
        st.proposed_rounds.add(round)
        st.blocks[block.digest] = block
        msg = self._make_preprepare(round, block, highest_cc, view_cert)
        logger.debug("node %s proposes %r at height %s round %s", self.node, block.digest, st.height, round)
        if round == 1 and self.params.speculative and self.keys.valid and self.participants.n > 1:
            st.speculative_proposal = msg
            st.proposals[round] = msg
            self._emit(StartSpeculation(msg))
            return
        self._broadcast_proposal(msg)

    def _broadcast_proposal(self, msg: Preprepare):
        self._send(None, msg)
        self.state.proposals[msg.round] = msg
        self._consider_proposal(msg)

    @_collects
    def on_speculation_failed(self, height: int):
        st = self.state
        msg = st.speculative_proposal
        if st.height != height or msg is None or st.phase is Phase.FINALIZED or st.round != 1:
            return
        st.speculative_proposal = None
        logger.info("node %s: speculative path failed at height %s, using collector path", self.node, height)
        self._broadcast_proposal(msg)

    # ---------- prepare ----------

    @_collects
    def on_preprepare(self, msg: Preprepare):
        st = self.state
        r = msg.round
        if not self._proposal_signed(msg):
            self._ignore(msg, InvalidSignature("bad proposal signature"))
            return
        if msg.sender != self.leader(r):
            self._raise_evidence(SlashEvidence(
                kind=EvidenceKind.NON_LEADER_PROPOSAL,
                offender=msg.sender,
                proposals=(msg.proposal,),
                leader_seed=st.leader_schedule_seed,
                leader_mode=self.params.leader_mode,
            ))
            self._ignore(msg, WrongLeader("wrong leader"))
            return
        if r < st.round:
            self._ignore(msg, StaleRound("stale round"))
            return
        if r > 1 and not self._view_cert_valid(msg.view_cert, r):
            self._ignore(msg, InvalidCert("missing view certificate"))
            return
        if r > st.round:
            self._advance_round(r, announce=False)
        prior = st.proposals.get(r)
        if prior is not None and prior.block.digest != msg.block.digest:
            pair = tuple(sorted((prior.proposal, msg.proposal), key=lambda p: p.block_hash))
            self._raise_evidence(SlashEvidence(EvidenceKind.EQUIVOCATION, msg.sender, pair))
            self._ignore(msg, Equivocation("equivocation"))
            return
        if prior is not None and r in st.voted_rounds:
            self._ignore(msg, DuplicateMessage("duplicate proposal"))
            return
        st.proposals[r] = msg
        st.blocks.setdefault(msg.block.digest, msg.block)
        self._consider_proposal(msg)
        self._resume_on_body(msg.block)

    def _proposal_problem(self, msg: Preprepare) -> Optional[ProtocolError]:
        st = self.state
        block, cc = msg.block, msg.highest_cc
        if block.height != st.height or block.parent_hash != self.tip_hash or block.round > msg.round:
            return InvalidBlockContent("malformed block")
        if cc is None and block.round != msg.round:
            return InvalidBlockContent("malformed block")
        if cc is not None and (cc.block_hash != block.digest or cc.round >= msg.round or not self._cc_valid(cc)):
            return InvalidCert("bad justification")
        if first_invalid_tx(block, self.params.rules) is not None:
            return InvalidTransaction("invalid transaction")
        return None

    def _consider_proposal(self, msg: Preprepare):
        st = self.state
        r, block, cc = msg.round, msg.block, msg.highest_cc
        problem = self._proposal_problem(msg)
        if isinstance(problem, InvalidTransaction):
            self._raise_evidence(SlashEvidence(
                kind=EvidenceKind.INVALID_BLOCK,
                offender=msg.sender,
                proposals=(msg.proposal,),
                block=block,
                failing_tx=first_invalid_tx(block, self.params.rules),
            ))
        if problem is not None:
            self._ignore(msg, problem)
            return
        locked = st.locked_cc
        if locked is not None and locked.block_hash != block.digest and (cc is None or cc.round <= locked.round):
            logger.debug("node %s locked on round %s, not voting at round %s", self.node, locked.round, r)
            return
        if r == 1 and st.speculated is not None and st.speculated != block.digest:
            self._ignore(msg, UnexpectedMessage("conflicts with speculative signature"))
            return
        if cc is not None and (locked is None or cc.round > locked.round):
            if locked is not None:
                logger.info("node %s unlocks round %s for round %s at height %s",
                            self.node, locked.round, cc.round, st.height)
            st.locked_cc = cc
            st.phase = Phase.LOCKED
        if r in st.voted_rounds or r != st.round:
            return
        self._send_prepare_vote(r, block.digest)

    def _evidence_to_gossip(self) -> tuple:
        slashed = self.ledger.slashed_nodes()
        return tuple(ev for _, ev in sorted(self.evidence_pool.items()) if ev.offender not in slashed)

    def _send_prepare_vote(self, round: int, block_hash: HashDigest):
        st = self.state
        st.voted_rounds.add(round)
        if st.phase is Phase.IDLE:
            st.phase = Phase.PREPARED_SENT
        share = self._sign(block_hash)
        collector = self.leader(round)
        if collector == self.node:
            self._collect_prepare(share, round)
        else:
            self._send(collector, PrepareVote(
                self.node, st.height, round, block_hash, share, self._evidence_to_gossip()
            ))

    @_collects
    def on_prepare_vote(self, msg: PrepareVote):
        st = self.state
        for ev in msg.evidence:
            self._absorb_evidence(ev)
        r = msg.round
        if self.leader(r) != self.node:
            self._ignore(msg, NotCollector("not collector"))
        elif r < st.round:
            self._ignore(msg, StaleRound("stale round"))
        elif r > st.round:
            self._buffer(msg)
        elif not self._share_ok(msg.share, msg.sender, msg.block_hash):
            self._ignore(msg, InvalidSignature("bad share"))
        else:
            self._collect_prepare(msg.share, r, msg)

    def _collect_prepare(self, share: Signature, round: int, msg: Optional[Message] = None):
        st = self.state
        bucket = st.prepare_votes.setdefault((round, share.digest), {})
        if share.signer in bucket:
            if msg is not None:
                self._ignore(msg, DuplicateMessage("duplicate vote"))
            return
        bucket[share.signer] = share
        if round in st.cc_by_round or len(bucket) < self.participants.quorum:
            return
        shares = tuple(sorted(bucket.values(), key=lambda s: s.signer))[: self.participants.quorum]
        self._emit_cc(round, share.digest, shares)

    def _emit_cc(self, round: int, block_hash: HashDigest, shares: tuple):
        st = self.state
        ts = self._combine_or_shares(shares)
        if ts is None:
            cc = CommitCert(st.height, round, block_hash, shares=shares)
            logger.info("node %s: DKG keys unusable, broadcasting raw prepare shares at height %s",
                        self.node, st.height)
            self._send(None, FallbackBroadcast(self.node, st.height, round, Stage.PREPARE, block_hash, shares))
        else:
            cc = CommitCert(st.height, round, block_hash, ts=ts)
            self._send(None, CCBroadcast(self.node, st.height, cc))
        st.cc_by_round[round] = cc
        self._accept_cc(cc)

    # ---------- commit ----------

    def _accept_cc(self, cc: CommitCert, msg: Optional[Message] = None):
        st = self.state
        locked = st.locked_cc
        if locked is not None and cc.round < locked.round:
            logger.debug("node %s keeps lock of round %s over CC of round %s", self.node, locked.round, cc.round)
            return
        if cc == locked and cc.round in st.commit_voted_rounds:
            if msg is not None:
                self._ignore(msg, DuplicateMessage("duplicate certificate"))
            return
        if locked is None or cc.round >= locked.round:
            st.locked_cc = cc
            st.phase = Phase.LOCKED
        if cc.round == st.round and cc.round not in st.commit_voted_rounds:
            self._send_commit_vote(cc)

    def _send_commit_vote(self, cc: CommitCert):
        st = self.state
        st.commit_voted_rounds.add(cc.round)
        share = self._sign(cc.digest)
        collector = self.leader(cc.round)
        if collector == self.node:
            self._collect_commit(share, cc.round)
        else:
            self._send(collector, CommitVote(self.node, st.height, cc.round, cc.digest, share))

    @_collects
    def on_cc_broadcast(self, msg: CCBroadcast):
        st = self.state
        cc = msg.cc
        if msg.sender != self.leader(cc.round):
            self._ignore(msg, WrongLeader("wrong collector"))
        elif not self._cc_valid(cc):
            self._ignore(msg, InvalidCert("invalid certificate"))
        elif cc.round > st.round:
            self._buffer(msg)
        else:
            self._accept_cc(cc, msg)

    @_collects
    def on_commit_vote(self, msg: CommitVote):
        st = self.state
        r = msg.round
        if self.leader(r) != self.node:
            self._ignore(msg, NotCollector("not collector"))
            return
        if r > st.round:
            self._buffer(msg)
            return
        cc = st.cc_by_round.get(r)
        if cc is None or msg.cc_hash != cc.digest:
            self._ignore(msg, InvalidCert("unknown certificate"))
        elif not self._share_ok(msg.share, msg.sender, cc.digest):
            self._ignore(msg, InvalidSignature("bad share"))
        else:
            self._collect_commit(msg.share, r, msg)

    def _collect_commit(self, share: Signature, round: int, msg: Optional[Message] = None):
        st = self.state
        bucket = st.commit_votes.setdefault(round, {})
        if share.signer in bucket:
            if msg is not None:
                self._ignore(msg, DuplicateMessage("duplicate vote"))
            return
        bucket[share.signer] = share
        if round in st.finalize_sent or len(bucket) < self.participants.quorum:
            return
        st.finalize_sent.add(round)
        shares = tuple(sorted(bucket.values(), key=lambda s: s.signer))[: self.participants.quorum]
        self._emit_finalize(st.cc_by_round[round], shares)

    def _emit_finalize(self, cc: CommitCert, shares: tuple):
        st = self.state
        ts_cc = self._combine_or_shares(shares)
        if ts_cc is None:
            self._send(None, FallbackBroadcast(
                self.node, st.height, cc.round, Stage.COMMIT, cc.digest, shares, cc=cc
            ))
            self._finalize(FinalityProof(cc, commit_shares=shares))
        else:
            self._send(None, FinalizeBroadcast(self.node, st.height, cc, ts_cc))
            self._finalize(FinalityProof(cc, ts_cc=ts_cc))

    @_collects
    def on_finalize(self, msg: FinalizeBroadcast):
        if not self._cc_valid(msg.cc):
            self._ignore(msg, InvalidCert("invalid certificate"))
        elif not self.crypto.verify_threshold(msg.ts_cc, msg.cc.digest, self.keys):
            self._ignore(msg, InvalidTs("invalid ts"))
        else:
            self._finalize(FinalityProof(msg.cc, ts_cc=msg.ts_cc))

    @_collects
    def on_fallback(self, msg: FallbackBroadcast):
        st = self.state
        if msg.sender != self.leader(msg.round):
            self._ignore(msg, WrongLeader("wrong collector"))
            return
        if msg.stage is Stage.PREPARE:
            cc = CommitCert(st.height, msg.round, msg.digest, shares=tuple(msg.shares))
            if len(msg.shares) != self.participants.quorum or not self._cc_valid(cc):
                self._ignore(msg, InvalidCert("invalid fallback shares"))
            elif cc.round > st.round:
                self._buffer(msg)
            else:
                self._accept_cc(cc, msg)
            return
        cc = msg.cc
        if cc is None or cc.digest != msg.digest or not self._cc_valid(cc):
            self._ignore(msg, InvalidCert("invalid certificate"))
        elif not self._quorum_of(msg.shares, cc.digest):
            self._ignore(msg, InvalidCert("invalid fallback shares"))
        else:
            self._finalize(FinalityProof(cc, commit_shares=tuple(msg.shares)))

    # ---------- finalization ----------

    def _finalize(self, proof: FinalityProof, speculative: bool = False):
        st = self.state
        if st.phase is Phase.FINALIZED:
            return
        cc = proof.cc
        block = st.blocks.get(cc.block_hash)
        if block is None:
            if st.awaiting_body is None:
                st.awaiting_body = (proof, speculative)
                self._send(None, BlockRequest(self.node, st.height, cc.block_hash))
            return
        failing = first_invalid_tx(block, self.params.rules)
        if block.parent_hash != self.tip_hash or failing is not None:
            proposal = st.proposals.get(cc.round)
            if failing is not None and proposal is not None and proposal.block.digest == block.digest:
                self._raise_evidence(SlashEvidence(
                    EvidenceKind.INVALID_BLOCK, proposal.sender, (proposal.proposal,),
                    block=block, failing_tx=failing,
                ))
            logger.warning("node %s refuses to finalize invalid block at height %s", self.node, st.height)
            return

        h = st.height
        self.chain.append(block)
        self.proofs[h] = proof
        st.phase = Phase.FINALIZED
        st.locked_cc = None
        self._emit(Finalized(h, block, proof, speculative))
        logger.info(
            "node %s finalized height %s in round %s%s", self.node, h, cc.round,
            " (fallback)" if proof.fallback else " (speculative)" if speculative else "",
        )
        if proof.ts_cc is not None:
            next_seed = HashDigest(proof.ts_cc.proof)
        else:
            next_seed = hash_fields("fallback", st.leader_schedule_seed, block.digest)
        self._apply_block(block, h, proof)
        if h >= self.params.max_height or self.retired:
            self.done = True
            return
        self._start_height(h + 1, next_seed)

    def _apply_block(self, block: Block, height: int, proof: FinalityProof):
        for ev in block.evidence:
            before = self.ledger.slashed_nodes()
            try:
                self.ledger, self.participants = apply_slash(
                    self.ledger, ev, self.participants, self.crypto, self.keys, height, self.params.rules
                )
            except (InvalidEvidence, NotAMember) as exc:
                logger.warning("node %s skips evidence in block %s: %s", self.node, height, exc)
                continue
            if ev.offender not in before:
                self._emit(Slashed(self.ledger.slashed[-1]))
        slashed = self.ledger.slashed_nodes()
        self.evidence_pool = {k: ev for k, ev in self.evidence_pool.items() if ev.offender not in slashed}
        self.included.update(tx for tx in block.txs if Mempool.tracks(tx))
        self.schedule = ingest_finalized_block(self.schedule, block)

        if self.schedule.is_boundary(height):
            self._change_epoch(height)
        elif proof.fallback:
            generation = height + 1
            keys, record = self.crypto.run_dkg(
                self.participants,
                self.params.dkg_failure_prob,
                dkg_seed(self.params.run_seed, self.participants.epoch, generation),
                self.params.dkg_cost_constant,
                generation=generation,
                height=height,
            )
            self.keys = keys
            self._emit(KeysInstalled(height + 1, self.participants, keys, (record,)))

    def _change_epoch(self, height: int):
        try:
            result = epoch_transition(
                self.schedule,
                self.participants,
                self.ledger,
                dkg_seed(self.params.run_seed, self.participants.epoch + 1, 0),
                self.crypto,
                self.params.dkg_failure_prob,
                self.params.dkg_cost_constant,
                height,
            )
        except SetTooSmall as exc:
            logger.error("node %s keeps epoch %s membership: %s", self.node, self.participants.epoch, exc)
            result = epoch_transition(
                replace(self.schedule, requests=()),
                self.participants,
                self.ledger,
                dkg_seed(self.params.run_seed, self.participants.epoch + 1, 0),
                self.crypto,
                self.params.dkg_failure_prob,
                self.params.dkg_cost_constant,
                height,
            )
        self.participants = result.participants
        self.keys = result.keys
        self.ledger = result.ledger
        self.schedule = result.schedule
        self._emit(KeysInstalled(height + 1, result.participants, result.keys, result.records))
        if self.node not in result.participants:
            logger.info("node %s leaves after height %s", self.node, height)
            self.retired = True

    # ---------- view change ----------

    @_collects
    def on_timeout(self, height: int, round: int):
        st = self.state
        if self.done or self.retired or st.phase is Phase.FINALIZED:
            return
        if height != st.height or round != st.round:
            return
        logger.info("node %s: round %s timed out at height %s", self.node, round, height)
        self._advance_round(round + 1, announce=True)

    def _advance_round(self, round: int, announce: bool):
        st = self.state
        st.round = round
        st.phase = Phase.LOCKED if st.locked_cc is not None else Phase.IDLE
        self._arm_timer(round)
        if announce:
            self._send_new_view(round)
        self._on_round_start(round)
        self._drain_pending()

    def _send_new_view(self, round: int):
        st = self.state
        nv = NewView(
            sender=self.node,
            height=st.height,
            new_round=round,
            share=self._sign(new_view_digest(st.height, round)),
            locked_cc=st.locked_cc,
            evidence=self._evidence_to_gossip(),
        )
        leader = self.leader(round)
        if leader == self.node:
            self._collect_new_view(nv)
        else:
            self._send(leader, nv)

    @_collects
    def on_new_view(self, msg: NewView):
        st = self.state
        for ev in msg.evidence:
            self._absorb_evidence(ev)
        r = msg.round
        if self.leader(r) != self.node:
            self._ignore(msg, NotLeader("not leader"))
        elif r < st.round:
            self._ignore(msg, StaleRound("stale round"))
        elif not self._share_ok(msg.share, msg.sender, new_view_digest(st.height, r)):
            self._ignore(msg, InvalidSignature("bad share"))
        elif msg.locked_cc is not None and not self._cc_valid(msg.locked_cc):
            self._ignore(msg, InvalidCert("invalid certificate"))
        else:
            self._collect_new_view(msg, msg)

    def _collect_new_view(self, nv: NewView, msg: Optional[Message] = None):
        st = self.state
        r = nv.round
        bucket = st.new_views.setdefault(r, {})
        if nv.sender in bucket:
            if msg is not None:
                self._ignore(msg, DuplicateMessage("duplicate new view"))
            return
        bucket[nv.sender] = nv
        if r > st.round and len(bucket) >= self.participants.f + 1:
            # f+1 senders include an honest replica that already left the round.
            self._advance_round(r, announce=True)
            return
        if r == st.round and r not in st.proposed_rounds and len(bucket) >= self.participants.quorum:
            self._propose_from_views(r, bucket)

    def _propose_from_views(self, round: int, bucket: dict):
        st = self.state
        shares = tuple(sorted((v.share for v in bucket.values()), key=lambda s: s.signer))
        shares = shares[: self.participants.quorum]
        ts = self._combine_or_shares(shares)
        view_cert = ViewCert(st.height, round, ts=ts) if ts is not None else ViewCert(st.height, round, shares=shares)
        locks = [v.locked_cc for v in bucket.values() if v.locked_cc is not None]
        if st.locked_cc is not None:
            locks.append(st.locked_cc)
        highest = max(locks, key=lambda cc: cc.round, default=None)
        self._propose(round, highest, view_cert)

    # ---------- bodies and catch-up ----------

    @_collects
    def on_block_request(self, msg: BlockRequest):
        block = next((b for b in reversed(self.chain) if b.digest == msg.block_hash), None)
        if block is None and self.state is not None:
            block = self.state.blocks.get(msg.block_hash)
        if block is not None:
            self._send(msg.sender, BlockBody(self.node, msg.height, block))

    @_collects
    def on_block_body(self, msg: BlockBody):
        st = self.state
        wanted = set()
        if st.awaiting_body is not None:
            wanted.add(st.awaiting_body[0].cc.block_hash)
        if st.waiting_proposal is not None:
            wanted.add(st.waiting_proposal[1].block_hash)
        if msg.block.digest not in wanted:
            self._ignore(msg, UnexpectedMessage("unsolicited body"))
            return
        st.blocks[msg.block.digest] = msg.block
        self._resume_on_body(msg.block)

    def _resume_on_body(self, block: Block):
        st = self.state
        if st.waiting_proposal is not None and st.waiting_proposal[1].block_hash == block.digest:
            round, highest, view_cert = st.waiting_proposal
            st.waiting_proposal = None
            if round == st.round:
                self._propose(round, highest, view_cert)
        if st.awaiting_body is not None and st.awaiting_body[0].cc.block_hash == block.digest:
            proof, speculative = st.awaiting_body
            st.awaiting_body = None
            self._finalize(proof, speculative)

    @_collects
    def on_decision(self, msg: Decision):
        st = self.state
        if msg.block.digest != msg.proof.cc.block_hash or not self._proof_valid(msg.proof):
            self._ignore(msg, InvalidCert("invalid decision"))
            return
        st.blocks[msg.block.digest] = msg.block
        logger.info("node %s catches up on height %s from node %s", self.node, st.height, msg.sender)
        self._finalize(msg.proof)

    # ---------- speculative path ----------

    def cosi_prepare(self, proposal: Preprepare) -> Optional[Signature]:
        """Signature over the proposed block hash for the first tree pass."""
        st = self.state
        if self.retired or st.height != proposal.height or st.round != 1 or st.phase is Phase.FINALIZED:
            return None
        if proposal.sender != self.leader(1) or not self._proposal_signed(proposal):
            return None
        if self._proposal_problem(proposal) is not None:
            return None
        block = proposal.block
        if st.speculated is not None and st.speculated != block.digest:
            return None
        st.proposals.setdefault(1, proposal)
        st.blocks.setdefault(block.digest, block)
        st.speculated = block.digest
        return self._sign(block.digest)

    def cosi_commit(self, cc: CommitCert) -> Optional[Signature]:
        """Signature over hash(CC) for the second tree pass; locks on ``cc``."""
        st = self.state
        if self.retired or st.phase is Phase.FINALIZED or st.round != 1 or cc.block_hash != st.speculated:
            return None
        if not self._cc_valid(cc):
            return None
        if st.locked_cc is None:
            st.locked_cc = cc
            st.phase = Phase.LOCKED
        return self._sign(cc.digest)

    @_collects
    def on_cosi_finalize(self, msg: CosiFinalize):
        proof = msg.proof
        if msg.block.digest != proof.cc.block_hash or not self._proof_valid(proof):
            self._ignore(msg, InvalidCert("invalid speculative proof"))
            return
        if proof.ms_cc is None or proof.ms_cc.signer_bitmap != frozenset(self.participants.members):
            self._ignore(msg, InvalidCert("incomplete multi-signature"))
            return
        self.state.blocks.setdefault(msg.block.digest, msg.block)
        self._finalize(proof, speculative=True)

    # ---------- evidence ----------

    def _raise_evidence(self, ev: SlashEvidence):
        if ev.fingerprint in self.evidence_seen:
            return
        self.evidence_seen.add(ev.fingerprint)
        if ev.offender in self.ledger.slashed_nodes():
            return
        self.evidence_pool[ev.fingerprint] = ev
        logger.warning("node %s: %s evidence against node %s at height %s",
                       self.node, ev.kind.value, ev.offender, ev.height)
        self._emit(EvidenceFound(ev))

    def _absorb_evidence(self, ev: SlashEvidence):
        if ev.fingerprint in self.evidence_seen:
            return
        if verify_evidence(ev, self.crypto, self.keys, self.participants, self.params.rules):
            self._raise_evidence(ev)
