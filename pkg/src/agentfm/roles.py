"""System role manager: bootstrap node roles from cluster configuration,
refresh them from observed system state, and emit per-node agent specs."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Mapping, Optional

from .errors import ConfigError, StateError, ValidationError

NODE_KINDS = ("config", "coordinator", "storage")
LEADERSHIP = ("leader", "follower", "none")
DEFAULT_REFRESH_PERIOD = 10.0


@dataclass(frozen=True)
class NodeRole:
    node_id: str
    kind: str
    leadership: str
    leader_partition_count: int
    importance: float
    up: bool = True

    def __post_init__(self):
        if self.kind not in NODE_KINDS:
            raise ValidationError(f"unknown kind {self.kind!r}", field="role.kind")
        if self.leadership not in LEADERSHIP:
            raise ValidationError(f"unknown leadership {self.leadership!r}", field="role.leadership")
        if self.importance <= 0:
            raise ValidationError("must be > 0", field="role.importance")
        if self.leader_partition_count < 0:
            raise ValidationError("must be >= 0", field="role.leader_partition_count")
        if self.leadership == "leader" and self.leader_partition_count < 1:
            raise ValidationError("a leader holds at least one partition", field="role.leadership")

    def to_json(self) -> dict:
        return {
            "node": self.node_id,
            "kind": self.kind,
            "leadership": self.leadership,
            "leader_partitions": self.leader_partition_count,
            "importance": self.importance,
            "up": self.up,
        }


@dataclass(frozen=True)
class RoleTable:
    epoch: int
    roles: Mapping[str, NodeRole]
    total_partitions: int = 1

    def __post_init__(self):
        if self.epoch < 0:
            raise ValidationError("must be >= 0", field="epoch")
        for nid, role in self.roles.items():
            if nid != role.node_id:
                raise ValidationError(f"key {nid!r} holds role for {role.node_id!r}", field="roles")

    def __getitem__(self, node_id) -> NodeRole:
        return self.roles[node_id]

    def __contains__(self, node_id):
        return node_id in self.roles

    def __len__(self):
        return len(self.roles)

    @property
    def leader(self) -> Optional[str]:
        leaders = [n for n, r in self.roles.items() if r.leadership == "leader"]
        return leaders[0] if leaders else None

    def importance(self, node_id) -> float:
        return self.roles[node_id].importance

    def live_nodes(self) -> list[str]:
        return [n for n, r in self.roles.items() if r.up]

    def to_json(self) -> dict:
        return {
            "epoch": self.epoch,
            "total_partitions": self.total_partitions,
            "leader": self.leader,
            "roles": [r.to_json() for r in self.roles.values()],
        }


@dataclass(frozen=True)
class NodeState:
    up: bool
    leader_partition_count: int
    kind: Optional[str] = None


@dataclass(frozen=True)
class SystemState:
    nodes: Mapping[str, NodeState]

    @classmethod
    def from_json(cls, obj: Mapping) -> "SystemState":
        return cls(
            {
                nid: NodeState(
                    up=s.get("liveness", "up") == "up",
                    leader_partition_count=int(s.get("leader_partitions", 0)),
                    kind=s.get("kind"),
                )
                for nid, s in obj["nodes"].items()
            }
        )

    def to_json(self) -> dict:
        nodes = {}
        for nid, s in self.nodes.items():
            rec = {"liveness": "up" if s.up else "down", "leader_partitions": s.leader_partition_count}
            if s.kind is not None:
                rec["kind"] = s.kind
            nodes[nid] = rec
        return {"nodes": nodes}


@dataclass(frozen=True)
class StandaloneAgentSpec:
    node_id: str
    role: NodeRole
    data_agents: tuple[str, ...] = ("metric", "log")

    @property
    def system_agent(self) -> str:
        return f"{self.role.kind.capitalize()} Agent"


def importance_for(leader_partitions: int, total_partitions: int) -> float:
    return 1.0 + leader_partitions / max(1, total_partitions)


def _elect(candidates: Mapping[str, int]) -> Optional[str]:
    """Most leader partitions wins; ties go to the smallest node id."""
    eligible = [(-c, n) for n, c in candidates.items() if c >= 1]
    return min(eligible)[1] if eligible else None


def bootstrap_roles(config_doc: Mapping) -> RoleTable:
    """Build the epoch-0 table from a cluster config document::

        {"nodes": [{"id": "n1", "kind": "storage", "leader_partitions": 2}],
         "total_partitions": 8}
    """
    nodes = config_doc.get("nodes") or []
    if not nodes:
        raise ConfigError("cluster config lists no nodes")
    total = int(config_doc.get("total_partitions", 0) or 0)
    counts: dict[str, int] = {}
    kinds: dict[str, str] = {}
    for rec in nodes:
        nid = rec.get("id")
        if not nid:
            raise ConfigError("node without id")
        if nid in counts:
            raise ConfigError(f"duplicate node id {nid!r}")
        kind = rec.get("kind")
        if not kind:
            raise ConfigError(f"node {nid!r} has no kind")
        if kind not in NODE_KINDS:
            raise ConfigError(f"node {nid!r} has unknown kind {kind!r}")
        kinds[nid] = kind
        counts[nid] = int(rec.get("leader_partitions", 0) or 0)
    if total and sum(counts.values()) > total:
        raise ConfigError("leader partitions exceed total_partitions")
    total = total or sum(counts.values())
    leader = _elect(counts)
    roles = {
        nid: NodeRole(
            node_id=nid,
            kind=kinds[nid],
            leadership="leader" if nid == leader else "follower",
            leader_partition_count=counts[nid],
            importance=importance_for(counts[nid], total),
        )
        for nid in counts
    }
    return RoleTable(0, roles, total)


def refresh_roles(table: RoleTable, state: SystemState) -> RoleTable:
    """Re-derive roles from observed state; bump the epoch only on change.

    A live leader keeps leadership; otherwise the live node holding the most
    leader partitions is elected. Down nodes lead nothing.
    """
    missing = [n for n in table.roles if n not in state.nodes]
    if missing:
        raise StateError(f"system state does not cover node(s) {', '.join(sorted(missing))}")

    counts = {n: (state.nodes[n].leader_partition_count if state.nodes[n].up else 0) for n in table.roles}
    current = table.leader
    if current is not None and state.nodes[current].up and counts[current] >= 1:
        leader = current
    else:
        leader = _elect({n: c for n, c in counts.items() if state.nodes[n].up})

    roles = {}
    for nid, old in table.roles.items():
        s = state.nodes[nid]
        if not s.up:
            leadership = "none"
        else:
            leadership = "leader" if nid == leader else "follower"
        roles[nid] = replace(
            old,
            kind=s.kind or old.kind,
            leadership=leadership,
            leader_partition_count=counts[nid],
            importance=importance_for(counts[nid], table.total_partitions),
            up=s.up,
        )
    if roles == dict(table.roles):
        return table
    return RoleTable(table.epoch + 1, roles, table.total_partitions)


def instantiate_agents(table: RoleTable) -> list[StandaloneAgentSpec]:
    return [StandaloneAgentSpec(nid, role) for nid, role in table.roles.items() if role.up]


class RoleManager:
    """Single owner of the role table; readers get immutable snapshots."""

    def __init__(self, table: RoleTable, refresh_period: float = DEFAULT_REFRESH_PERIOD):
        self._table = table
        self.refresh_period = refresh_period
        self._last_refresh: Optional[float] = None

    @classmethod
    def from_config(cls, config_doc: Mapping, **kwargs) -> "RoleManager":
        return cls(bootstrap_roles(config_doc), **kwargs)

    @property
    def snapshot(self) -> RoleTable:
        return self._table

    def due(self, now: float) -> bool:
        return self._last_refresh is None or now - self._last_refresh >= self.refresh_period

    def observe(self, state: SystemState, now: Optional[float] = None) -> RoleTable:
        self._table = refresh_roles(self._table, state)
        self._last_refresh = now
        return self._table


def load_cluster_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from None
