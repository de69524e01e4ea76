"""Network information base: topology, flow table and attribute store.

The NIB executes nothing unless it arrives as a :class:`SealedQuery` whose MAC
verifies under ``K_NIB`` and whose nonce has never been seen. Everything else
is dropped and audited.
"""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from naca.audit import AuditLog
from naca.authcode import MAC_LENGTH, NONCE_LENGTH, MacKey, canonical_encode, digest, mac_compute, mac_verify
from naca.controller.intents import Query, QueryOp

logger = logging.getLogger(__name__)

FIXTURE_DIR = Path(__file__).parent / "data" / "topologies"


class TopologyError(ValueError):
    pass


class QueryRejected(RuntimeError):
    """The NIB refused to execute a query (bad MAC, stale nonce, bad target)."""

    def __init__(self, reason: str) -> None:
        self.reason = reason
        super().__init__(reason)


@dataclass(frozen=True)
class Node:
    id: str
    jurisdiction: str
    placement: str
    ltps: tuple[str, ...]


Endpoint = tuple[str, str]


@dataclass(frozen=True)
class Host:
    id: str
    ip: str
    node: str


@dataclass
class FlowEntry:
    flow_id: str
    node: str
    src_ip: str
    dst_ip: str
    proto: str
    src_port: int
    dst_port: int
    action: str
    app_id: str
    request_id: str
    packets: int = 0
    bytes: int = 0

    def to_json(self) -> dict[str, Any]:
        return dict(self.__dict__)


@dataclass
class NibSnapshot:
    nodes: dict[str, Node]
    links: list[tuple[Endpoint, Endpoint]]
    hosts: dict[str, Host] = field(default_factory=dict)
    flows: dict[str, FlowEntry] = field(default_factory=dict)
    subscriptions: set[str] = field(default_factory=set)
    config: dict[str, dict[str, str]] = field(default_factory=dict)

    def neighbours(self, node: str) -> list[str]:
        out = set()
        for (a, _), (b, _) in self.links:
            if a == node:
                out.add(b)
            elif b == node:
                out.add(a)
        return sorted(out)

    def adjacency(self) -> dict[str, list[str]]:
        """Sorted neighbour lists, memoised (snapshots handed out are never
        mutated)."""
        cached = self.__dict__.get("_adjacency")
        if cached is not None:
            return cached
        adj: dict[str, set[str]] = {n: set() for n in self.nodes}
        for (a, _), (b, _) in self.links:
            adj[a].add(b)
            adj[b].add(a)
        out = {n: sorted(v) for n, v in adj.items()}
        self.__dict__["_adjacency"] = out
        return out

    def host_by_ip(self, ip: str) -> Host | None:
        for h in self.hosts.values():
            if h.ip == ip:
                return h
        return None


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise TopologyError(message)


def load_topology(doc: Mapping[str, Any] | str | Path) -> NibSnapshot:
    """Validate a topology document and build a snapshot.

    ``doc`` may be a parsed dict, a path, or the name of a shipped fixture
    (``"line3"``, ``"mesh5"``).
    """
    if isinstance(doc, (str, Path)):
        path = Path(doc)
        if not path.exists() and (FIXTURE_DIR / f"{doc}.json").exists():
            path = FIXTURE_DIR / f"{doc}.json"
        doc = json.loads(path.read_text())
    _require(isinstance(doc, Mapping), "topology must be a JSON object")
    unknown = set(doc) - {"nodes", "links", "hosts", "name"}
    _require(not unknown, f"unknown topology keys {sorted(unknown)}")
    _require(isinstance(doc.get("nodes"), list), "topology needs a 'nodes' list")
    nodes: dict[str, Node] = {}
    for raw in doc["nodes"]:
        _require(isinstance(raw, Mapping), "node entries must be objects")
        missing = {"id", "jurisdiction", "placement", "ltps"} - set(raw)
        _require(not missing, f"node {raw.get('id')!r} lacks {sorted(missing)}")
        _require(raw["id"] not in nodes, f"duplicate node {raw['id']!r}")
        ltps = tuple(str(x) for x in raw["ltps"])
        _require(len(set(ltps)) == len(ltps), f"node {raw['id']!r} repeats an LTP")
        nodes[raw["id"]] = Node(str(raw["id"]), str(raw["jurisdiction"]), str(raw["placement"]), ltps)
    links: list[tuple[Endpoint, Endpoint]] = []
    used: set[Endpoint] = set()
    for raw in doc.get("links", []):
        _require(isinstance(raw, list) and len(raw) == 2, f"link {raw!r} must be a pair of endpoints")
        ends = []
        for end in raw:
            _require(isinstance(end, list) and len(end) == 2, f"endpoint {end!r} must be [node, ltp]")
            node, ltp = str(end[0]), str(end[1])
            _require(node in nodes, f"link references unknown node {node!r}")
            _require(ltp in nodes[node].ltps, f"link references unknown LTP {node}:{ltp}")
            _require((node, ltp) not in used, f"LTP {node}:{ltp} is linked twice")
            used.add((node, ltp))
            ends.append((node, ltp))
        _require(ends[0][0] != ends[1][0], f"self-loop on {ends[0][0]!r}")
        links.append((ends[0], ends[1]))
    hosts: dict[str, Host] = {}
    for raw in doc.get("hosts", []):
        missing = {"id", "ip", "node"} - set(raw)
        _require(not missing, f"host {raw.get('id')!r} lacks {sorted(missing)}")
        _require(raw["node"] in nodes, f"host {raw['id']!r} attached to unknown node {raw['node']!r}")
        _require(raw["id"] not in hosts, f"duplicate host {raw['id']!r}")
        hosts[raw["id"]] = Host(str(raw["id"]), str(raw["ip"]), str(raw["node"]))
    return NibSnapshot(nodes, links, hosts)


def grid_topology(rows: int, cols: int, regions: int = 2) -> dict[str, Any]:
    """A generated ``rows x cols`` grid, split into vertical jurisdiction bands."""
    nodes, links, hosts = [], [], []

    def nid(r: int, c: int) -> str:
        return f"g{r:03d}-{c:03d}"

    for r in range(rows):
        for c in range(cols):
            region = chr(ord("A") + min(regions - 1, c * regions // cols))
            nodes.append(
                {
                    "id": nid(r, c),
                    "jurisdiction": f"region-{region}",
                    "placement": "edge" if c in (0, cols - 1) else "core",
                    "ltps": ["n", "s", "e", "w", "h"],
                }
            )
            if c + 1 < cols:
                links.append([[nid(r, c), "e"], [nid(r, c + 1), "w"]])
            if r + 1 < rows:
                links.append([[nid(r, c), "s"], [nid(r + 1, c), "n"]])
    hosts.append({"id": "hsrc", "ip": "10.1.0.1", "node": nid(0, 0)})
    hosts.append({"id": "hdst", "ip": "10.1.0.2", "node": nid(rows - 1, cols - 1)})
    return {"nodes": nodes, "links": links, "hosts": hosts}


@dataclass(frozen=True)
class SealedQuery:
    query: Query
    nonce: bytes
    mac: bytes

    def canonical_fields(self) -> tuple:
        return (self.query, self.nonce, self.mac)


def seal_message(query: Query, nonce: bytes) -> bytes:
    return canonical_encode(query, nonce)


def seal(key: MacKey, query: Query, nonce: bytes) -> SealedQuery:
    return SealedQuery(query, nonce, mac_compute(key, seal_message(query, nonce)))


def flow_id_for(node: str, src_ip: str, dst_ip: str, proto: str, src_port: int, dst_port: int) -> str:
    return "f-" + digest(canonical_encode(node, src_ip, dst_ip, proto, src_port, dst_port))[:6].hex()


def _port(value: Any) -> int:
    if isinstance(value, bool):
        raise QueryRejected("port must be numeric")
    try:
        port = int(value)
    except (TypeError, ValueError):
        raise QueryRejected(f"port {value!r} is not numeric") from None
    if not 0 <= port <= 65535:
        raise QueryRejected(f"port {port} out of range")
    return port


def _scope(query: Query, name: str) -> frozenset[str] | None:
    raw = query.arg(name)
    if raw is None:
        return None
    return frozenset(v for v in str(raw).split(",") if v)


class Nib:
    def __init__(self, snapshot: NibSnapshot, key: MacKey | None = None, audit: AuditLog | None = None) -> None:
        self._state = snapshot
        self._key = key
        self.audit = audit if audit is not None else AuditLog()
        self._nonces: set[bytes] = set()
        self._topology_version = 0
        # (query, result) for every executed query; consumed by soundness oracles.
        self.log: list[tuple[Query, Any]] = []

    def provision_key(self, key: MacKey) -> None:
        self._key = key

    @property
    def nonce_count(self) -> int:
        return len(self._nonces)

    def read_view(self) -> NibSnapshot:
        view = copy.deepcopy(self._state)
        view.__dict__.pop("_adjacency", None)
        view.__dict__.pop("_allowed", None)
        return view

    @property
    def topology_version(self) -> int:
        """Bumped whenever nodes or links change; flows do not count."""
        return self._topology_version

    def node_attributes(self, node_id: str) -> dict[str, str] | None:
        """Read channel for the reference monitor's attribute resolution."""
        node = self._state.nodes.get(node_id)
        if node is None:
            return None
        return {"jurisdiction": node.jurisdiction, "placement": node.placement}

    def execute(self, sealed: Any) -> Any:
        if not isinstance(sealed, SealedQuery):
            return self._drop(None, "unsealed query ignored")
        q = sealed.query
        if self._key is None:
            return self._drop(q, "no K_NIB provisioned")
        if len(sealed.nonce) != NONCE_LENGTH or len(sealed.mac) != MAC_LENGTH:
            return self._drop(q, "malformed seal")
        if not mac_verify(self._key, seal_message(q, sealed.nonce), sealed.mac):
            return self._drop(q, "bad MAC")
        if sealed.nonce in self._nonces:
            return self._drop(q, "replayed nonce")
        self._nonces.add(sealed.nonce)
        try:
            result = self._dispatch(q)
        except QueryRejected as exc:
            return self._drop(q, exc.reason)
        self.log.append((q, result))
        self.audit.record("nib", "executed", app_id=q.app_id, request_id=q.request_id, op=q.op.value, target=q.target)
        return result

    def execute_plain(self, query: Query) -> Any:
        """Unauthenticated execution path, used only by the no-enforcement baseline."""
        result = self._dispatch(query)
        self.log.append((query, result))
        return result

    def _drop(self, q: Query | None, reason: str) -> None:
        logger.warning("NIB dropped query: %s", reason)
        fields = {"reason": reason}
        if q is not None:
            fields.update(app_id=q.app_id, request_id=q.request_id, op=q.op.value, target=q.target)
        self.audit.record("nib", "dropped", **fields)
        return None

    def _node(self, node_id: str):
        node = self._state.nodes.get(node_id)
        if node is None:
            raise QueryRejected(f"unknown node {node_id!r}")
        return node

    def _dispatch(self, q: Query) -> Any:
        st = self._state
        if q.op is QueryOp.TOPO_READ:
            return self._topo_read(q)
        if q.op is QueryOp.NODE_LTPS:
            return list(self._node(q.target).ltps)
        if q.op is QueryOp.FLOW_INSTALL:
            self._node(q.target)
            proto = str(q.arg("proto", "")).upper()
            if not proto:
                raise QueryRejected("flow needs a protocol")
            src_port, dst_port = _port(q.arg("src_port", 0)), _port(q.arg("dst_port", 0))
            src_ip, dst_ip = str(q.arg("src_ip", "")), str(q.arg("dst_ip", ""))
            fid = flow_id_for(q.target, src_ip, dst_ip, proto, src_port, dst_port)
            if fid not in st.flows:
                st.flows[fid] = FlowEntry(
                    fid, q.target, src_ip, dst_ip, proto, src_port, dst_port,
                    str(q.arg("action", "allow")), q.app_id, q.request_id,
                )
            return {"flow_id": fid}
        if q.op is QueryOp.FLOW_DELETE:
            self._node(q.target)
            fid = str(q.arg("flow_id", ""))
            flow = st.flows.get(fid)
            if flow is None or flow.node != q.target:
                raise QueryRejected(f"no flow {fid!r} on {q.target!r}")
            del st.flows[fid]
            return {"flow_id": fid, "deleted": True}
        if q.op is QueryOp.STATS_READ:
            self._node(q.target)
            fid = q.arg("flow_id")
            flows = [f for f in st.flows.values() if f.node == q.target and (fid is None or f.flow_id == fid)]
            return {f.flow_id: {"packets": f.packets, "bytes": f.bytes} for f in sorted(flows, key=lambda f: f.flow_id)}
        if q.op is QueryOp.CONFIG_READ:
            self._node(q.target)
            return dict(st.config.get(q.target, {}))
        if q.op is QueryOp.CONFIG_MOD:
            self._node(q.target)
            key = q.arg("key")
            if key is None:
                raise QueryRejected("config_mod needs a key")
            st.config.setdefault(q.target, {})[str(key)] = str(q.arg("value", ""))
            return {"ok": True}
        if q.op is QueryOp.SUBSCRIBE:
            st.subscriptions.add(q.app_id)
            return {"subscribed": True}
        raise QueryRejected(f"unsupported op {q.op!r}")

    def _topo_read(self, q: Query) -> dict[str, Any]:
        jurisdictions = _scope(q, "scope_jurisdiction")
        placements = _scope(q, "scope_placement")
        st = self._state
        visible = sorted(
            n.id
            for n in st.nodes.values()
            if (jurisdictions is None or n.jurisdiction in jurisdictions)
            and (placements is None or n.placement in placements)
        )
        inside = set(visible)
        links = sorted(
            [list(a), list(b)] for a, b in st.links if a[0] in inside and b[0] in inside
        )
        hosts = sorted(h.id for h in st.hosts.values() if h.node in inside)
        return {"nodes": visible, "links": links, "hosts": hosts}
