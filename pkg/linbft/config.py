"""Scenario configuration: TOML loading, defaults and validation."""

from __future__ import annotations

import copy
import logging
import math

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

from .adversary import AdversarySpec, Behavior
from .chain import DEFAULT_MAX_TXS, DEFAULT_STAKE, BlockRules, Transaction
from .cosi import DEFAULT_FANOUT
from .digest import HashDigest
from .errors import ConfigInvalid
from .leaders import LeaderMode
from .mempool import Mempool
from .network import NetworkConfig
from .replica import GENESIS_SEED, ProtocolParams

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_RHO = 1e-18

TOP_LEVEL_KEYS = {
    "schema_version", "name", "n", "f", "f_actual", "num_heights", "seed", "leader_mode",
    "speculative", "network", "adversary", "epoch_length", "dkg_failure_prob",
    "dkg_cost_constant", "rho", "max_txs_per_block", "txs_per_block", "stake",
    "timeout_deltas", "buffer_capacity", "cosi_fanout", "genesis_seed", "membership",
}
NETWORK_KEYS = {"delta", "gst", "drop_before_gst", "reorder"}
ADVERSARY_KEYS = {
    "corrupted", "behaviors", "per_node", "rushing", "rotate", "rotate_count", "invalid_tx_heights",
}
MEMBERSHIP_KEYS = {"height", "action", "node", "deposit"}


@dataclass(frozen=True)
class MembershipChange:
    height: int
    action: str
    node: int
    deposit: int = DEFAULT_STAKE

    def transaction(self) -> Transaction:
        if self.action == "join":
            return Transaction.join(self.node, b"pk:%d" % self.node, self.deposit)
        return Transaction.leave(self.node)


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    n: int = 4
    f: Optional[int] = None
    f_actual: int = 0
    num_heights: int = 10
    seed: int = 0
    leader_mode: LeaderMode = LeaderMode.PERMUTATION
    speculative: bool = False
    network: NetworkConfig = field(default_factory=NetworkConfig)
    adversary: AdversarySpec = field(default_factory=AdversarySpec)
    epoch_length: Optional[int] = None
    dkg_failure_prob: Optional[float] = None
    dkg_cost_constant: int = 1
    rho: float = DEFAULT_RHO
    max_txs_per_block: int = DEFAULT_MAX_TXS
    txs_per_block: int = 4
    stake: int = DEFAULT_STAKE
    timeout_deltas: int = 6
    buffer_capacity: int = 1024
    cosi_fanout: int = DEFAULT_FANOUT
    genesis_seed: HashDigest = GENESIS_SEED
    membership: tuple = ()

    # ---------- derived ----------

    @property
    def effective_f(self) -> int:
        bound = (self.n - 1) // 3
        return bound if self.f is None else min(self.f, bound)

    @property
    def effective_epoch_length(self) -> int:
        return self.epoch_length if self.epoch_length is not None else 4 * self.n

    @property
    def effective_dkg_failure_prob(self) -> float:
        return self.rho if self.dkg_failure_prob is None else self.dkg_failure_prob

    @property
    def watchdog(self) -> int:
        gst = self.network.gst or 0
        return 100 * (gst + self.n * self.network.delta * self.num_heights)

    def protocol_params(self) -> ProtocolParams:
        return ProtocolParams(
            delta=self.network.delta,
            timeout_deltas=self.timeout_deltas,
            leader_mode=self.leader_mode,
            speculative=self.speculative,
            cosi_fanout=self.cosi_fanout,
            buffer_capacity=self.buffer_capacity,
            max_height=self.num_heights,
            epoch_length=self.effective_epoch_length,
            rules=BlockRules(max_txs=self.max_txs_per_block, stake=self.stake),
            dkg_failure_prob=self.effective_dkg_failure_prob,
            dkg_cost_constant=self.dkg_cost_constant,
            run_seed=self.seed,
        )

    def mempool(self) -> Mempool:
        return Mempool(
            seed=self.seed,
            txs_per_block=self.txs_per_block,
            scheduled=tuple((m.height, m.transaction()) for m in self.membership),
        )

    # ---------- validation ----------

    def validate(self) -> "ScenarioConfig":
        problems = []
        if self.n < 1:
            problems.append("n must be at least 1")
        if self.f is not None and not 0 <= self.f <= max(self.n - 1, 0) // 3:
            problems.append(f"f={self.f} must lie in [0, floor((n-1)/3)]")
        if self.f_actual < 0:
            problems.append("f_actual must be non-negative")
        if self.n < 3 * self.f_actual + 1:
            problems.append(f"n={self.n} violates n >= 3f+1 for f_actual={self.f_actual}")
        elif self.f_actual > self.effective_f:
            problems.append(f"f_actual={self.f_actual} exceeds f={self.effective_f}")
        if self.num_heights < 1:
            problems.append("num_heights must be at least 1")
        if self.effective_epoch_length < self.n:
            problems.append(f"epoch_length={self.effective_epoch_length} is shorter than n={self.n}")
        if not 0.0 <= self.effective_dkg_failure_prob <= 1.0:
            problems.append("dkg_failure_prob must be a probability")
        if not 0.0 < self.rho < 1.0:
            problems.append("rho must lie in (0, 1)")
        if self.dkg_cost_constant < 0:
            problems.append("dkg_cost_constant must be non-negative")
        if self.max_txs_per_block < 1:
            problems.append("max_txs_per_block must be at least 1")
        if not 0 <= self.txs_per_block <= self.max_txs_per_block:
            problems.append("txs_per_block must lie in [0, max_txs_per_block]")
        if self.timeout_deltas < 1:
            problems.append("timeout_deltas must be at least 1")
        if self.buffer_capacity < 1:
            problems.append("buffer_capacity must be at least 1")
        if self.cosi_fanout < 2:
            problems.append("cosi_fanout must be at least 2")

        adv = self.adversary
        if any(not 0 <= node < self.n for node in adv.corrupted):
            problems.append("corrupted nodes must be genesis members")
        if len(adv.corrupted) > self.f_actual:
            problems.append(f"{len(adv.corrupted)} corrupted nodes exceed f_actual={self.f_actual}")
        if adv.rotate_count is not None and adv.rotate_count > self.f_actual:
            problems.append("rotate_count exceeds f_actual")
        for change in self.membership:
            if change.action not in ("join", "leave"):
                problems.append(f"membership action {change.action!r} is not join/leave")
            if change.height < 1 or change.node < 0:
                problems.append(f"membership entry {change} is out of range")
            if change.action == "join" and change.deposit < self.stake:
                logger.warning("join of node %s carries deposit %s below stake %s; it will be rejected",
                               change.node, change.deposit, self.stake)
        if problems:
            raise ConfigInvalid("; ".join(problems))
        return self

    # ---------- (de)serialization ----------

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], defaults: Optional[Mapping[str, Any]] = None) -> "ScenarioConfig":
        merged = _deep_merge(defaults or {}, data)
        unknown = set(merged) - TOP_LEVEL_KEYS
        if unknown:
            raise ConfigInvalid(f"unknown keys: {', '.join(sorted(unknown))}")
        version = merged.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigInvalid(f"unsupported schema_version {version}")
        try:
            kwargs = dict(merged)
            if "leader_mode" in kwargs:
                kwargs["leader_mode"] = LeaderMode(kwargs["leader_mode"])
            if "network" in kwargs:
                kwargs["network"] = _network(kwargs["network"])
            if "adversary" in kwargs:
                kwargs["adversary"] = _adversary(kwargs["adversary"], kwargs.get("f_actual", 0))
            elif kwargs.get("f_actual", 0):
                kwargs["adversary"] = _adversary({}, kwargs["f_actual"])
            if "genesis_seed" in kwargs:
                kwargs["genesis_seed"] = HashDigest.from_hex(kwargs["genesis_seed"])
            if "membership" in kwargs:
                kwargs["membership"] = tuple(_membership(entry) for entry in kwargs["membership"])
            for key in ("n", "num_heights", "seed", "f_actual"):
                if key in kwargs and not isinstance(kwargs[key], int):
                    raise ConfigInvalid(f"{key} must be an integer")
            config = cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigInvalid(str(exc)) from exc
        return config.validate()

    def as_dict(self) -> dict:
        adv = self.adversary
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "n": self.n,
            "f": self.effective_f,
            "f_actual": self.f_actual,
            "num_heights": self.num_heights,
            "seed": self.seed,
            "leader_mode": self.leader_mode.value,
            "speculative": self.speculative,
            "network": {
                "delta": self.network.delta,
                "gst": "inf" if self.network.gst is None else self.network.gst,
                "drop_before_gst": self.network.drop_before_gst,
                "reorder": self.network.reorder,
            },
            "adversary": {
                "corrupted": sorted(adv.corrupted),
                "behaviors": [b.value for b in adv.behaviors],
                "per_node": {str(node): [b.value for b in bs] for node, bs in adv.per_node},
                "rushing": adv.rushing,
                "rotate": adv.rotate,
                "rotate_count": adv.rotate_count,
                "invalid_tx_heights": sorted(adv.invalid_tx_heights),
            },
            "epoch_length": self.effective_epoch_length,
            "dkg_failure_prob": self.effective_dkg_failure_prob,
            "dkg_cost_constant": self.dkg_cost_constant,
            "rho": self.rho,
            "max_txs_per_block": self.max_txs_per_block,
            "txs_per_block": self.txs_per_block,
            "stake": self.stake,
            "timeout_deltas": self.timeout_deltas,
            "buffer_capacity": self.buffer_capacity,
            "cosi_fanout": self.cosi_fanout,
            "genesis_seed": self.genesis_seed.hex(),
            "membership": [
                {"height": m.height, "action": m.action, "node": m.node, "deposit": m.deposit}
                for m in self.membership
            ],
        }


def _deep_merge(base: Mapping, override: Mapping) -> dict:
    merged = copy.deepcopy(dict(base))
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _check_keys(section: str, data: Mapping, allowed: set):
    unknown = set(data) - allowed
    if unknown:
        raise ConfigInvalid(f"unknown keys in [{section}]: {', '.join(sorted(unknown))}")


def _network(data: Mapping) -> NetworkConfig:
    _check_keys("network", data, NETWORK_KEYS)
    kwargs = dict(data)
    gst = kwargs.get("gst", 0)
    if isinstance(gst, str):
        if gst.lower() not in ("inf", "infinity", "never"):
            raise ConfigInvalid(f"gst must be an integer or 'inf', got {gst!r}")
        kwargs["gst"] = None
    elif isinstance(gst, float) and math.isinf(gst):
        kwargs["gst"] = None
    return NetworkConfig(**kwargs)


def _behaviors(names) -> tuple:
    try:
        return tuple(Behavior(name) for name in names)
    except ValueError as exc:
        raise ConfigInvalid(f"unknown adversary behaviour: {exc}") from exc


def _adversary(data: Mapping, f_actual: int) -> AdversarySpec:
    _check_keys("adversary", data, ADVERSARY_KEYS)
    kwargs = dict(data)
    corrupted = kwargs.get("corrupted")
    rotate = bool(kwargs.get("rotate", False))
    if corrupted is None:
        # Without an explicit set the first f_actual genesis members are corrupted.
        corrupted = [] if rotate else list(range(f_actual))
    kwargs["corrupted"] = frozenset(int(node) for node in corrupted)
    if rotate and kwargs.get("rotate_count") is None:
        kwargs["rotate_count"] = f_actual
    if "behaviors" in kwargs:
        kwargs["behaviors"] = _behaviors(kwargs["behaviors"])
    if "per_node" in kwargs:
        kwargs["per_node"] = tuple(
            (int(node), _behaviors(names)) for node, names in sorted(kwargs["per_node"].items(), key=lambda kv: int(kv[0]))
        )
    if "invalid_tx_heights" in kwargs:
        kwargs["invalid_tx_heights"] = frozenset(kwargs["invalid_tx_heights"])
    return AdversarySpec(**kwargs)


def _membership(entry: Mapping) -> MembershipChange:
    _check_keys("membership", entry, MEMBERSHIP_KEYS)
    return MembershipChange(**entry)


def load_scenario(path, overrides: Optional[Mapping] = None, defaults: Optional[Mapping] = None) -> ScenarioConfig:
    """Read a TOML scenario, layering ``defaults`` under it and ``overrides`` over it."""
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigInvalid(f"scenario file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigInvalid(f"{path}: {exc}") from exc
    data.setdefault("name", path.stem)
    if overrides:
        data = _deep_merge(data, overrides)
    return ScenarioConfig.from_mapping(data, defaults)
