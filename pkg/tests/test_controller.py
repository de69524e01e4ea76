from __future__ import annotations

import random

import networkx as nx
import pytest

from naca.controller import (
    MAX_RETRIES,
    TRANSITIONS,
    IllegalTransition,
    Intent,
    IntentError,
    IntentEvent,
    IntentLifecycle,
    IntentState,
    Query,
    QueryOp,
    step_state,
)
from naca.controller.compiler import CompileError, allowed_nodes, compile_intent, shortest_path
from naca.controller.mock import Fault, FaultKind, MockController
from naca.nib import load_topology
from naca.policy.model import AccessMask, AccessModel, Action, AttributeConstraint, MaskTuple, ResourceAccessRule
from naca.tagger import ForwardedRequest
from tests.oracles import DIAGRAM_EDGES, oracle_path



class TestStateTable:
    def test_exhaustive_state_event_table(self):
        expected = {(IntentState(s), IntentEvent(e)): IntentState(t) for s, e, t in DIAGRAM_EDGES}
        for state in IntentState:
            for event in IntentEvent:
                key = (state, event)
                if key in expected:
                    assert step_state(state, event) is expected[key]
                else:
                    with pytest.raises(IllegalTransition):
                        step_state(state, event)
        assert TRANSITIONS == expected

    def test_monitor_reject_goes_to_failed(self):
        assert step_state(IntentState.REF_MONITOR, IntentEvent.REFERENCE_MONITOR_REJECTED) is IntentState.FAILED

    def test_terminal_state_has_no_exits(self):
        assert not [k for k in TRANSITIONS if k[0] is IntentState.WITHDRAWN]

    def test_retry_bound(self):
        lc = IntentLifecycle()
        for event in (1, 2, 3):
            lc.fire(IntentEvent(event))
        for _ in range(MAX_RETRIES):
            lc.fire(IntentEvent.COMPILE_FAILED)
            lc.fire(IntentEvent.RETRY_COMPILE)
        lc.fire(IntentEvent.COMPILE_FAILED)
        with pytest.raises(IllegalTransition, match="retry limit"):
            lc.fire(IntentEvent.RETRY_INSTALL_INTENT)
        assert lc.state is IntentState.FAILED
        assert lc.fire(IntentEvent.WITHDRAWAL_OF_FAILED_REQUESTS) is IntentState.WITHDRAWN
        assert lc.retries == MAX_RETRIES

    def test_illegal_event_leaves_state(self):
        lc = IntentLifecycle()
        with pytest.raises(IllegalTransition):
            lc.fire(IntentEvent.INSTALL_SUCCEEDED)
        assert lc.state is IntentState.NEW and lc.history == []


def _random_graph(rng: random.Random, n: int) -> dict[str, list[str]]:
    nodes = [f"n{i}" for i in range(n)]
    adj: dict[str, set[str]] = {v: set() for v in nodes}
    for _ in range(rng.randint(0, 2 * n)):
        a, b = rng.sample(nodes, 2)
        adj[a].add(b)
        adj[b].add(a)
    return {v: sorted(ns) for v, ns in adj.items()}


class TestShortestPath:
    def test_against_oracle(self):
        rng = random.Random(11)
        checked = 0
        for _ in range(300):
            adj = _random_graph(rng, rng.randint(2, 9))
            nodes = sorted(adj)
            src, dst = rng.sample(nodes, 2)
            allowed = set(rng.sample(nodes, rng.randint(1, len(nodes)))) if rng.random() < 0.5 else None
            want = oracle_path(adj, src, dst, allowed)
            if want is None:
                with pytest.raises(CompileError):
                    shortest_path(adj, src, dst, allowed)
            else:
                assert shortest_path(adj, src, dst, allowed) == want
                checked += 1
        assert checked > 50

    def test_same_node(self):
        assert shortest_path({"a": ["b"], "b": ["a"]}, "a", "a") == ["a"]

    def test_path_length_matches_networkx(self):
        adj = _random_graph(random.Random(4), 12)
        g = nx.Graph([(a, b) for a, ns in adj.items() for b in ns])
        for a, b in [("n0", "n5"), ("n3", "n11")]:
            if g.has_node(a) and g.has_node(b) and nx.has_path(g, a, b):
                assert len(shortest_path(adj, a, b)) - 1 == nx.shortest_path_length(g, a, b)


MESH = load_topology("mesh5")
REGION_A = AccessMask("a", (
    MaskTuple("flow", frozenset({Action.CONFIG_MOD}), (
        ResourceAccessRule("flow", (AttributeConstraint.equals("jurisdiction", "region-A"),)),
    )),
    MaskTuple("dataplane-topology", frozenset({Action.READ})),
), AccessModel("commons_uncontrolled"))


class TestCompile:
    def test_connectivity_follows_path(self):
        intent = Intent.make("connectivity", src_host="h1", dst_host="h3", protocol="udp", src_port=1, dst_port=2)
        batch = compile_intent(intent, "a", "a/1", None, MESH)
        path = shortest_path(MESH.adjacency(), MESH.hosts["h1"].node, MESH.hosts["h3"].node)
        assert [q.target for q in batch] == path
        assert all(q.op is QueryOp.FLOW_INSTALL and q.arg("proto") == "UDP" for q in batch)

    def test_mask_constrains_path(self):
        assert allowed_nodes(REGION_A, "flow", MESH) == {n for n, v in MESH.nodes.items() if v.jurisdiction == "region-A"}
        assert allowed_nodes(REGION_A, "dataplane-topology", MESH) is None
        intent = Intent.make("connectivity", src_host="h1", dst_host="h3", protocol="udp")
        with pytest.raises(CompileError):
            compile_intent(intent, "a", "a/1", REGION_A, MESH)

    def test_compile_is_deterministic(self):
        intent = Intent.make("connectivity", src_host="h1", dst_host="h4", protocol="tcp")
        assert compile_intent(intent, "a", "a/1", None, MESH) == compile_intent(intent, "a", "a/1", None, MESH)

    @pytest.mark.parametrize("kind, params, op, target", [
        ("topology_read", {}, QueryOp.TOPO_READ, "*"),
        ("node_ltps", {"node": "s2"}, QueryOp.NODE_LTPS, "s2"),
        ("stats_read", {"node": "s1"}, QueryOp.STATS_READ, "s1"),
        ("config_read", {"node": "s1"}, QueryOp.CONFIG_READ, "s1"),
        ("config_mod", {"node": "s1", "key": "k", "value": "v"}, QueryOp.CONFIG_MOD, "s1"),
        ("subscribe", {}, QueryOp.SUBSCRIBE, "*"),
    ])
    def test_single_query_kinds(self, kind, params, op, target):
        (q,) = compile_intent(Intent.make(kind, **params), "a", "a/1", None, MESH)
        assert (q.op, q.target, q.app_id, q.request_id) == (op, target, "a", "a/1")

    def test_withdraw_needs_installed_flows(self):
        intent = Intent.make("withdraw", request_id="a/1")
        with pytest.raises(CompileError):
            compile_intent(intent, "a", "a/2", None, MESH)
        batch = compile_intent(intent, "a", "a/2", None, MESH, {"a/1": [("s1", "f1")]})
        assert batch == [Query("a", "a/2", "flow_delete", "s1", {"flow_id": "f1"})]

    def test_intent_validation(self):
        with pytest.raises(IntentError):
            Intent.make("node_ltps")
        with pytest.raises(IntentError):
            Intent.from_json({"kind": "teleport"})
        with pytest.raises(ValueError):
            Intent.make("node_ltps", node=1.5)
        intent = Intent.from_json({"kind": "node_ltps", "node": "s1", "priority": 2})
        assert intent.priority == 2 and Intent.from_json(intent.to_json()) == intent


def _fwd(req: str, intent: Intent, app: str = "a", mask: AccessMask = REGION_A) -> ForwardedRequest:
    return ForwardedRequest(app, req, intent, intent.resources, mask)


class TestMockController:
    def make(self) -> MockController:
        return MockController(lambda: MESH)

    def test_submit_then_process(self):
        c = self.make()
        assert c.submit(_fwd("a/1", Intent.make("topology_read"))) is IntentState.INSTALL_REQUEST
        c.process()
        assert c.state_of("a/1") is IntentState.REF_MONITOR
        assert list(c.outbox) == [("a", "a/1", [Query("a", "a/1", "topo_read", "*")])]
        c.on_verdict("a/1", True)
        assert c.state_of("a/1") is IntentState.INSTALLED

    def test_rejection_fails_intent(self):
        c = self.make()
        c.submit(_fwd("a/1", Intent.make("topology_read")))
        c.process()
        c.on_verdict("a/1", None)
        assert c.state_of("a/1") is IntentState.REF_MONITOR
        c.on_verdict("a/1", False)
        assert c.state_of("a/1") is IntentState.FAILED
        assert c.withdraw_failed("a/1") is IntentState.WITHDRAWN

    def test_compile_failure_exhausts_retries(self):
        c = self.make()
        c.submit(_fwd("a/1", Intent.make("connectivity", src_host="h1", dst_host="h3", protocol="udp")))
        c.process()
        assert c.state_of("a/1") is IntentState.FAILED
        assert len(c.audit.select("controller", "compile_failed")) == MAX_RETRIES + 1
        assert list(c.outbox) == [("a", "a/1", [])]

    def test_delay_and_flush(self):
        c = self.make()
        c.inject_fault(Fault(FaultKind.DELAY, k=1))
        for i in (1, 2, 3):
            c.submit(_fwd(f"a/{i}", Intent.make("topology_read")))
        c.process()
        assert [r for _, r, _ in c.outbox] == ["a/2", "a/1", "a/3"]

    def test_reorder(self):
        c = self.make()
        c.inject_fault(Fault(FaultKind.REORDER, perm=(2, 0, 1)))
        for i in (1, 2, 3):
            c.submit(_fwd(f"a/{i}", Intent.make("topology_read")))
        c.process()
        assert [r for _, r, _ in c.outbox] == ["a/3", "a/1", "a/2"]

    def test_partial_reorder_flushed(self):
        c = self.make()
        c.inject_fault(Fault(FaultKind.REORDER, perm=(1, 0)))
        c.submit(_fwd("a/1", Intent.make("topology_read")))
        c.process()
        assert not c.outbox
        c.flush()
        assert [r for _, r, _ in c.outbox] == ["a/1"]

    def test_forge_rewrite_drop(self):
        c = self.make()
        spec = {"op": "flow_install", "target": "s4", "args": {"src_ip": "1", "dst_ip": "2", "proto": "UDP"}}
        c.inject_fault(Fault(FaultKind.FORGE_EXTRA, queries=(spec,)))
        c.inject_fault(Fault(FaultKind.REWRITE, queries=({"op": "stats_read", "target": "s1", "app_id": "b"},)))
        c.inject_fault(Fault(FaultKind.DROP_BATCH))
        for i in (1, 2, 3):
            c.submit(_fwd(f"a/{i}", Intent.make("topology_read")))
        c.process()
        forged, rewritten = list(c.outbox)
        assert [q.op for q in forged[2]] == [QueryOp.TOPO_READ, QueryOp.FLOW_INSTALL]
        assert rewritten[2] == [Query("b", "a/2", "stats_read", "s1")]
        assert c.audit.select("controller", "batch_dropped")[0]["request_id"] == "a/3"

    def test_swap_mask_uses_other_app(self):
        c = self.make()
        open_mask = AccessMask("b", (MaskTuple("flow", frozenset({Action.CONFIG_MOD})),), AccessModel("commons_uncontrolled"))
        intent = Intent.make("connectivity", src_host="h1", dst_host="h3", protocol="udp")
        c.submit(_fwd("b/1", Intent.make("topology_read"), app="b", mask=open_mask))
        c.process()
        c.inject_fault(Fault(FaultKind.SWAP_MASK, app_id="b"))
        c.submit(_fwd("a/2", intent))
        c.process()
        assert c.outbox[-1][2]
        assert c.state_of("a/2") is IntentState.REF_MONITOR

    def test_withdraw_lifecycle(self):
        c = self.make()
        open_mask = AccessMask("a", (MaskTuple("flow", frozenset({Action.CONFIG_MOD})),), AccessModel("commons_uncontrolled"))
        c.submit(_fwd("a/1", Intent.make("connectivity", src_host="h1", dst_host="h2", protocol="udp"), mask=open_mask))
        c.process()
        (_, _, batch), = c.outbox
        c.on_verdict("a/1", True)
        c.on_result("a/1", [{"flow_id": f"f{i}"} for i in range(len(batch))])
        c.submit(_fwd("a/2", Intent.make("withdraw", request_id="a/1"), mask=open_mask))
        c.process()
        assert c.state_of("a/1") is IntentState.WITHDRAWING
        c.on_verdict("a/2", True)
        assert c.state_of("a/1") is IntentState.WITHDRAWN
        assert "a/1" not in c.installed_flows

    def test_fault_validation(self):
        with pytest.raises(ValueError):
            Fault(FaultKind.DELAY)
        with pytest.raises(ValueError):
            Fault(FaultKind.REORDER, perm=(0, 0))
        with pytest.raises(ValueError):
            Fault(FaultKind.FORGE_EXTRA)
        f = Fault.from_json({"mode": "forge-extra", "query": {"op": "topo_read"}})
        assert f.kind is FaultKind.FORGE_EXTRA and Fault.from_json(f.to_json()) == f
