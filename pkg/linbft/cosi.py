"""Speculative all-signers aggregation over a balanced tree.

One pass pushes a digest from the root down to every node and folds the
signatures back up. A node that misses a child's contribution gives up the
pass and reports to the root, and the height continues on the collector path.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Mapping, Optional, Union

from .accounting import SizeClass, TransmissionRecord
from .crypto import IdealCrypto, MultiSignature, Signature, ThresholdKeySet
from .digest import ZERO_DIGEST, HashDigest, NodeId, hash_fields
from .leaders import leader_permutation

logger = logging.getLogger(__name__)

DEFAULT_FANOUT = 2


def tree_depth(n: int, fanout: int = DEFAULT_FANOUT) -> int:
    """Depth of a complete ``fanout``-ary tree on ``n`` nodes."""
    depth, covered, width = 0, 1, 1
    while covered < n:
        width *= fanout
        covered += width
        depth += 1
    return depth


@dataclass(frozen=True)
class AggregationTree:
    root: NodeId
    children: Mapping
    parents: Mapping
    fanout: int
    depth: int
    order: tuple

    @property
    def n(self) -> int:
        return len(self.order)

    def __contains__(self, node) -> bool:
        return node in self.parents or node == self.root


def build_tree(participants, fanout: int = DEFAULT_FANOUT, seed: HashDigest = ZERO_DIGEST,
               root: Optional[NodeId] = None) -> AggregationTree:
    if fanout < 2:
        raise ValueError("fanout must be at least 2")
    members = tuple(participants.members)
    root = members[0] if root is None else root
    if root not in members:
        raise ValueError(f"root {root} is not a member")
    others = tuple(m for m in members if m != root)
    order = (root,) + (leader_permutation(hash_fields("tree", seed), others) if others else ())

    children = {node: [] for node in order}
    parents = {}
    for i in range(1, len(order)):
        parent = order[(i - 1) // fanout]
        children[parent].append(order[i])
        parents[order[i]] = parent

    return AggregationTree(
        root=root,
        children=MappingProxyType({node: tuple(kids) for node, kids in children.items()}),
        parents=MappingProxyType(parents),
        fanout=fanout,
        depth=tree_depth(len(order), fanout),
        order=order,
    )


@dataclass(frozen=True)
class Success:
    signature: MultiSignature


@dataclass(frozen=True)
class Fallback:
    reason: str
    reporter: NodeId


@dataclass
class SpeculativePass:
    outcome: Union[Success, Fallback]
    started: int
    elapsed: int
    records: list = field(default_factory=list)
    shares: dict = field(default_factory=dict)

    @property
    def succeeded(self) -> bool:
        return isinstance(self.outcome, Success)

    @property
    def finished(self) -> int:
        return self.started + self.elapsed


def _unit_delay(sender, receiver, now) -> int:
    return 1


def speculative_round(
    tree: AggregationTree,
    digest: HashDigest,
    contribute: Callable[[NodeId], Optional[Signature]],
    crypto: IdealCrypto,
    keys: ThresholdKeySet,
    link_delay: Callable[[NodeId, NodeId, int], int] = _unit_delay,
    delta: int = 1,
    height: int = 0,
    start: int = 0,
    stage: str = "prepare",
) -> SpeculativePass:
    """Run one down-pass and one up-pass of ``digest`` through ``tree``.

    ``contribute(node)`` returns the node's signature over ``digest`` or None
    when the node stays silent. The pass fails if any share is missing or
    invalid, or if the root is not done within 2·depth·Δ.
    """
    n = tree.n
    records = []

    def record(kind, sender, receiver, at):
        records.append(TransmissionRecord(
            height=height, round=1, msg_kind=f"cosi_{stage}_{kind}",
            size_class=SizeClass.CONSTANT, n=n, sender=sender, receiver=receiver, time=at,
        ))

    arrival = {tree.root: start}
    for node in tree.order[1:]:
        parent = tree.parents[node]
        sent = arrival[parent]
        arrival[node] = sent + link_delay(parent, node, sent)
        record("down", parent, node, sent)

    ready: dict = {}
    subtree: dict = {}
    failure: Optional[Fallback] = None
    for node in reversed(tree.order):
        share = contribute(node)
        if share is None or share.signer != node or share.digest != digest or not crypto.verify(share, keys):
            failure = failure or Fallback(f"no valid share from node {node}", tree.parents.get(node, node))
            ready[node] = None
            continue
        kids = tree.children[node]
        if any(ready[kid] is None for kid in kids):
            ready[node] = None
            continue
        done_at = arrival[node]
        collected = {node: share}
        for kid in kids:
            sent = ready[kid]
            done_at = max(done_at, sent + link_delay(kid, node, sent))
            record("up", kid, node, sent)
            collected.update(subtree.pop(kid))
        ready[node] = done_at
        subtree[node] = collected

    budget = 2 * tree.depth * delta
    if failure is not None:
        logger.info("speculative %s pass at height %s failed: %s (reported by %s)",
                    stage, height, failure.reason, failure.reporter)
        return SpeculativePass(failure, start, budget, records)

    elapsed = ready[tree.root] - start
    if elapsed > budget:
        logger.info("speculative %s pass at height %s overran %s > %s", stage, height, elapsed, budget)
        return SpeculativePass(Fallback("deadline exceeded", tree.root), start, budget, records)

    shares = subtree[tree.root]
    signature = crypto.combine_multi(list(shares.values()))
    if signature.signer_bitmap != frozenset(tree.order) or not crypto.verify_multi(signature, keys):
        return SpeculativePass(Fallback("incomplete multi-signature", tree.root), start, budget, records)
    return SpeculativePass(Success(signature), start, elapsed, records, shares)
