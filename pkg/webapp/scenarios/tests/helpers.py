"""Small in-memory drivers shared by the test modules."""

from collections import defaultdict, deque
from pathlib import Path

from django.conf import settings

from linbft.chain import ParticipantSet
from linbft.crypto import IdealCrypto
from linbft.replica import GENESIS_SEED, Finalized, ProtocolParams, Replica, Send

CONFIG_DIR = Path(settings.LINBFT["CONFIG_DIR"])


def make_cluster(n, seed=0, max_height=3, failure_prob=0.0):
    """n honest replicas sharing one keyset, not yet started."""
    participants = ParticipantSet.genesis(n)
    crypto = IdealCrypto(seed)
    keys, _ = crypto.run_dkg(participants, failure_prob, 1)
    params = ProtocolParams(max_height=max_height, epoch_length=4 * n, dkg_failure_prob=failure_prob)
    replicas = {node: Replica(node, participants, keys, crypto, params) for node in participants.members}
    return replicas, crypto, keys


def start_all(replicas):
    return [(node, replica.start(GENESIS_SEED, now=0)) for node, replica in sorted(replicas.items())]


def pump(replicas, batches):
    """Deliver every Send instantly in FIFO order; timers are ignored.

    Returns the Finalized actions per node.
    """
    queue = deque((node, action) for node, actions in batches for action in actions)
    finals = defaultdict(list)
    while queue:
        node, action = queue.popleft()
        if isinstance(action, Send):
            members = replicas[node].participants.members
            targets = [action.to] if action.to is not None else [m for m in members if m != node]
            for target in targets:
                queue.extend((target, reply) for reply in replicas[target].handle(action.msg))
        elif isinstance(action, Finalized):
            finals[node].append(action)
    return finals
