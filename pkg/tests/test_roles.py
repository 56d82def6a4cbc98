import json

import pytest
from hypothesis import given, strategies as st

from agentfm.errors import ConfigError, StateError, ValidationError
from agentfm.roles import (
    NodeRole,
    NodeState,
    RoleManager,
    SystemState,
    bootstrap_roles,
    importance_for,
    instantiate_agents,
    load_cluster_config,
    refresh_roles,
)

SIX = {
    "nodes": [
        {"id": "n1", "kind": "config"},
        {"id": "n2", "kind": "coordinator"},
        {"id": "n3", "kind": "storage", "leader_partitions": 2},
        {"id": "n4", "kind": "storage", "leader_partitions": 1},
        {"id": "n5", "kind": "storage", "leader_partitions": 1},
        {"id": "n6", "kind": "storage", "leader_partitions": 4},
    ],
    "total_partitions": 8,
}


def state_of(table, **overrides):
    nodes = {n: NodeState(r.up, r.leader_partition_count, r.kind) for n, r in table.roles.items()}
    nodes.update(overrides)
    return SystemState(nodes)


def test_bootstrap_importance():
    t = bootstrap_roles(SIX)
    assert t.epoch == 0
    assert t.importance("n6") == 1.5
    assert max(t.roles, key=t.importance) == "n6"
    assert t.leader == "n6"
    assert t["n1"].importance == 1.0


def test_single_node_floor():
    t = bootstrap_roles({"nodes": [{"id": "a", "kind": "storage"}]})
    assert t["a"].importance == 1.0 and t.leader is None


@pytest.mark.parametrize(
    "doc",
    [
        {"nodes": []},
        {"nodes": [{"id": "a"}]},
        {"nodes": [{"id": "a", "kind": "database"}]},
        {"nodes": [{"id": "a", "kind": "storage"}, {"id": "a", "kind": "storage"}]},
        {"nodes": [{"id": "a", "kind": "storage", "leader_partitions": 5}], "total_partitions": 2},
    ],
)
def test_bad_configs(doc):
    with pytest.raises(ConfigError):
        bootstrap_roles(doc)


def test_load_cluster_config(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(SIX))
    assert load_cluster_config(p) == SIX
    p.write_text("{oops")
    with pytest.raises(ConfigError):
        load_cluster_config(p)


def test_refresh_unchanged_is_identity():
    t = bootstrap_roles(SIX)
    t2 = refresh_roles(t, state_of(t))
    assert t2 == t and t2.epoch == 0


def test_refresh_missing_node():
    t = bootstrap_roles(SIX)
    st_ = state_of(t)
    nodes = dict(st_.nodes)
    del nodes["n4"]
    with pytest.raises(StateError):
        refresh_roles(t, SystemState(nodes))


def test_leader_down_three_nodes():
    cfg = {
        "nodes": [
            {"id": "a", "kind": "storage", "leader_partitions": 3},
            {"id": "b", "kind": "storage", "leader_partitions": 2},
            {"id": "c", "kind": "storage", "leader_partitions": 2},
        ],
        "total_partitions": 8,
    }
    t = bootstrap_roles(cfg)
    assert t.leader == "a"
    t2 = refresh_roles(t, state_of(t, a=NodeState(False, 3, "storage")))
    # b and c tie on partitions; smallest id wins
    assert t2.leader == "b"
    assert t2.epoch == 1
    assert t2["a"].leadership == "none" and not t2["a"].up
    assert [r.leadership for r in t2.roles.values()].count("leader") == 1


def test_all_down():
    t = bootstrap_roles(SIX)
    t2 = refresh_roles(t, SystemState({n: NodeState(False, 0) for n in t.roles}))
    assert all(r.leadership == "none" for r in t2.roles.values())
    assert t2.epoch == 1 and t2.leader is None


def test_live_leader_keeps_leadership_when_overtaken():
    t = bootstrap_roles(SIX)
    t2 = refresh_roles(t, state_of(t, n3=NodeState(True, 4, "storage"), n6=NodeState(True, 3, "storage")))
    assert t2.leader == "n6"
    assert t2.epoch == 1  # partition counts changed


def test_instantiate_agents():
    t = bootstrap_roles(SIX)
    specs = instantiate_agents(t)
    assert len(specs) == 6
    assert all(s.data_agents == ("metric", "log") for s in specs)
    assert specs[0].system_agent == "Config Agent"
    t2 = refresh_roles(t, state_of(t, n2=NodeState(False, 0, "coordinator")))
    assert len(instantiate_agents(t2)) == 5


def test_instantiate_empty_table():
    from agentfm.roles import RoleTable

    assert instantiate_agents(RoleTable(0, {})) == []


def test_leader_needs_partitions():
    with pytest.raises(ValidationError):
        NodeRole("n", "storage", "leader", 0, 1.0)


def test_manager_snapshots():
    m = RoleManager.from_config(SIX, refresh_period=10)
    t0 = m.snapshot
    assert m.due(0)
    m.observe(state_of(t0, n6=NodeState(False, 4, "storage")), now=0)
    assert not m.due(5) and m.due(10)
    assert m.snapshot.epoch == 1 and t0.epoch == 0


@st.composite
def clusters(draw):
    n = draw(st.integers(1, 7))
    counts = draw(st.lists(st.integers(0, 5), min_size=n, max_size=n))
    cfg = {
        "nodes": [{"id": f"n{i}", "kind": "storage", "leader_partitions": c} for i, c in enumerate(counts)],
        "total_partitions": sum(counts) + draw(st.integers(0, 3)),
    }
    ups = draw(st.lists(st.booleans(), min_size=n, max_size=n))
    new_counts = draw(st.lists(st.integers(0, 5), min_size=n, max_size=n))
    return cfg, ups, new_counts


@given(clusters())
def test_refresh_properties(case):
    cfg, ups, new_counts = case
    t = bootstrap_roles(cfg)
    state = SystemState({f"n{i}": NodeState(u, c) for i, (u, c) in enumerate(zip(ups, new_counts))})
    t1 = refresh_roles(t, state)
    assert set(t1.roles) == set(t.roles)
    assert t1.epoch in (t.epoch, t.epoch + 1)
    assert refresh_roles(t1, state) == t1
    leaders = [n for n, r in t1.roles.items() if r.leadership == "leader"]
    live_with_partitions = [n for n, r in t1.roles.items() if r.up and r.leader_partition_count >= 1]
    assert len(leaders) == (1 if live_with_partitions else 0)
    for n in leaders:
        assert t1[n].up


def test_single_leader_failure_gives_one_new_leader():
    t = bootstrap_roles(SIX)
    t2 = refresh_roles(t, state_of(t, n6=NodeState(False, 0, "storage"), n3=NodeState(True, 6, "storage")))
    assert t2.leader == "n3" and t2.epoch == t.epoch + 1


@given(st.integers(0, 100), st.integers(0, 100), st.integers(1, 200))
def test_importance_strictly_increasing(a, b, total):
    if a < b:
        assert importance_for(a, total) < importance_for(b, total)
