"""Deterministic intent compilation.

``compile_intent`` is a pure function of its arguments: the same intent,
mask and topology view always produce the same batch, in the same order.
"""

from __future__ import annotations

from collections import deque
from typing import AbstractSet, Mapping, Sequence

from naca.controller.intents import Intent, IntentKind, Query, QueryOp
from naca.nib import NibSnapshot
from naca.policy.model import AccessMask, Attribute


class CompileError(RuntimeError):
    pass


def shortest_path(adjacency: Mapping[str, Sequence[str]], src: str, dst: str, allowed: AbstractSet[str] | None = None) -> list[str]:
    """Fewest-hop path from ``src`` to ``dst``; among equal-length paths the
    lexicographically smallest node sequence wins."""
    usable = (lambda n: True) if allowed is None else (lambda n: n in allowed)
    if not (usable(src) and usable(dst)) or src not in adjacency or dst not in adjacency:
        raise CompileError(f"no path from {src} to {dst}")
    dist = {dst: 0}
    frontier = deque([dst])
    while frontier:
        node = frontier.popleft()
        for nxt in adjacency[node]:
            if nxt not in dist and usable(nxt):
                dist[nxt] = dist[node] + 1
                frontier.append(nxt)
    if src not in dist:
        raise CompileError(f"no path from {src} to {dst}")
    path = [src]
    while path[-1] != dst:
        here = dist[path[-1]]
        path.append(min(n for n in adjacency[path[-1]] if dist.get(n) == here - 1))
    return path


def allowed_nodes(mask: AccessMask | None, resource: str, view: NibSnapshot) -> frozenset[str] | None:
    """Nodes the mask's jurisdiction/placement constraints leave usable for
    ``resource``; ``None`` when unconstrained."""
    if mask is None:
        return None
    tup = mask.tuple_for(resource)
    if tup is None:
        return None
    jurisdictions = tup.allowed_values(Attribute.JURISDICTION)
    placements = tup.allowed_values(Attribute.PLACEMENT)
    if jurisdictions is None and placements is None:
        return None
    # Views are immutable snapshots, so the filtered set is memoised on them.
    memo = view.__dict__.setdefault("_allowed", {})
    key = (jurisdictions, placements)
    if key not in memo:
        memo[key] = frozenset(
            n.id
            for n in view.nodes.values()
            if (jurisdictions is None or n.jurisdiction in jurisdictions)
            and (placements is None or n.placement in placements)
        )
    return memo[key]


def _flow_args(intent: Intent, src_ip: str, dst_ip: str) -> dict:
    return {
        "src_ip": src_ip,
        "dst_ip": dst_ip,
        "proto": str(intent.param("protocol")).upper(),
        "src_port": intent.param("src_port", 0),
        "dst_port": intent.param("dst_port", 0),
        "action": intent.param("action", "allow"),
    }


def compile_intent(
    intent: Intent,
    app_id: str,
    request_id: str,
    mask: AccessMask | None,
    view: NibSnapshot,
    installed_flows: Mapping[str, Sequence[tuple[str, str]]] | None = None,
) -> list[Query]:
    def q(op: QueryOp, target: str, **args) -> Query:
        return Query(app_id, request_id, op, target, tuple(sorted(args.items())))

    kind = intent.kind
    if kind is IntentKind.CONNECTIVITY:
        src = view.hosts.get(str(intent.param("src_host")))
        dst = view.hosts.get(str(intent.param("dst_host")))
        if src is None or dst is None:
            raise CompileError("unknown host in connectivity intent")
        path = shortest_path(view.adjacency(), src.node, dst.node, allowed_nodes(mask, "flow", view))
        args = _flow_args(intent, src.ip, dst.ip)
        return [q(QueryOp.FLOW_INSTALL, node, **args) for node in path]
    if kind is IntentKind.TOPOLOGY_READ:
        return [q(QueryOp.TOPO_READ, "*")]
    if kind is IntentKind.NODE_LTPS:
        return [q(QueryOp.NODE_LTPS, str(intent.param("node")))]
    if kind is IntentKind.FLOW_INSTALL:
        args = _flow_args(intent, str(intent.param("src_ip")), str(intent.param("dst_ip")))
        return [q(QueryOp.FLOW_INSTALL, str(intent.param("node")), **args)]
    if kind is IntentKind.STATS_READ:
        extra = {"flow_id": intent.param("flow_id")} if intent.param("flow_id") is not None else {}
        return [q(QueryOp.STATS_READ, str(intent.param("node")), **extra)]
    if kind is IntentKind.CONFIG_READ:
        return [q(QueryOp.CONFIG_READ, str(intent.param("node")))]
    if kind is IntentKind.CONFIG_MOD:
        return [q(QueryOp.CONFIG_MOD, str(intent.param("node")), key=intent.param("key"), value=intent.param("value"))]
    if kind is IntentKind.SUBSCRIBE:
        return [q(QueryOp.SUBSCRIBE, "*")]
    if kind is IntentKind.WITHDRAW:
        flows = (installed_flows or {}).get(str(intent.param("request_id")))
        if not flows:
            raise CompileError(f"nothing installed for {intent.param('request_id')}")
        return [q(QueryOp.FLOW_DELETE, node, flow_id=fid) for node, fid in flows]
    raise CompileError(f"unknown intent kind {kind!r}")
