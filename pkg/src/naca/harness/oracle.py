"""Soundness oracle over what actually reached the NIB.

It deliberately ignores the monitor's verdicts and recomputes legality from
first principles: the tagger's issue log, the masks MANO handed out, the
static topology attributes, and the audit trail's record of quarantines and
terminations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from naca.controller.intents import Query
from naca.policy.model import AccessMask, Action, Attribute

# Transcribed independently of the controller's table.
_ACCESS = {
    "topo_read": ("dataplane-topology", Action.READ),
    "node_ltps": ("dataplane-topology", Action.READ),
    "flow_install": ("flow", Action.CONFIG_MOD),
    "flow_delete": ("flow", Action.CONFIG_MOD),
    "stats_read": ("stats", Action.STAT),
    "config_read": ("device-config", Action.CONFIG_READ),
    "config_mod": ("device-config", Action.CONFIG_MOD),
    "subscribe": ("notifications", Action.SUBSCR),
}


@dataclass(frozen=True)
class Violation:
    request_id: str
    app_id: str
    op: str
    target: str
    reason: str


def _admits(mask: AccessMask, resource: str, attribute: Attribute, value: str | None) -> bool:
    for tup in mask.tuples:
        if tup.resource != resource:
            continue
        for rule in tup.rules:
            for c in rule.constraints:
                if c.attribute is attribute and value not in c.values:
                    return False
    return True


def _cut_off(audit: Any) -> dict[str, int]:
    """Audit sequence number after which each app must have no executions."""
    out: dict[str, int] = {}
    for e in audit:
        if e["component"] != "mano":
            continue
        if e["event"] == "mitigation" and e.get("action") == "quarantine":
            out.setdefault(e["app_id"], e["seq"])
        elif e["event"] == "terminated":
            for a in [e["app_id"], *e.get("revoked", [])]:
                out.setdefault(a, e["seq"])
    return out


def check_pipeline(pipeline: Any) -> list[Violation]:
    nib = pipeline.nib
    view = nib.read_view()
    issued = {t.request_id: t.app_id for t in pipeline.tagger.issued}
    masks = {a: r.mask for a, r in pipeline.mano.apps.items()}
    cut = _cut_off(pipeline.audit)
    executed_seq = [e["seq"] for e in pipeline.audit if e["component"] == "nib" and e["event"] == "executed"]
    violations: list[Violation] = []
    for (q, result), seq in zip(nib.log, executed_seq):
        violations.extend(_check_one(q, result, seq, issued, masks, cut, view))
    return violations


def _check_one(q: Query, result: Any, seq: int, issued, masks, cut, view) -> list[Violation]:
    def bad(reason: str) -> list[Violation]:
        return [Violation(q.request_id, q.app_id, q.op.value, q.target, reason)]

    if issued.get(q.request_id) != q.app_id:
        return bad("query not attributable to a tagged request of this app")
    if q.app_id in cut and seq > cut[q.app_id]:
        return bad("executed after quarantine or termination")
    mask = masks.get(q.app_id)
    if mask is None:
        return bad("app has no mask")
    resource, action = _ACCESS[q.op.value]
    tuples = [t for t in mask.tuples if t.resource == resource]
    if not tuples:
        return bad(f"{resource} outside mask")
    if not any(action in t.actions for t in tuples):
        return bad(f"{action.value} not permitted on {resource}")
    mod = "modify" if action is Action.CONFIG_MOD else "read"
    if not _admits(mask, resource, Attribute.MODIFICATION_TYPE, mod):
        return bad(f"modification_type {mod} not permitted")
    if q.target == "*":
        if q.op.value == "topo_read" and isinstance(result, dict):
            for node_id in result.get("nodes", []):
                node = view.nodes[node_id]
                if not _admits(mask, resource, Attribute.JURISDICTION, node.jurisdiction):
                    return bad(f"topology read revealed {node_id} in {node.jurisdiction}")
                if not _admits(mask, resource, Attribute.PLACEMENT, node.placement):
                    return bad(f"topology read revealed {node_id} placed {node.placement}")
        return []
    node = view.nodes.get(q.target)
    if node is None:
        return bad("unknown target executed")
    if not _admits(mask, resource, Attribute.JURISDICTION, node.jurisdiction):
        return bad(f"{q.target} jurisdiction {node.jurisdiction} outside mask")
    if not _admits(mask, resource, Attribute.PLACEMENT, node.placement):
        return bad(f"{q.target} placement {node.placement} outside mask")
    return []
