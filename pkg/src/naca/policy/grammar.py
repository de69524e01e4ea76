"""Parsing and serialisation of manifests and operator rule files.

Two equivalent surface forms are accepted:

* an XACML 3.0 subset built from ``AnyOf``/``AllOf``/``Match``/
  ``AttributeValue``/``AttributeDesignator``, where a resource ``AnyOf`` is
  followed by the action ``AnyOf`` that applies to it;
* a canonical JSON form::

    {"app_id": "A", "entries": [{"resource": "flow", "actions": ["read"]}]}

    {"rules": [{"rule_id": "r1", "resource": "dataplane-topology",
                "constraints": [{"attribute": "jurisdiction",
                                 "comparator": "equals", "values": ["region-A"]}],
                "actions": ["read"]}]}

XML fragments may have several top-level ``AnyOf`` elements (one for the
resources, one for the actions); they are wrapped in a synthetic root before parsing.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable
from xml.parsers import expat
from xml.sax.saxutils import escape, quoteattr

from naca.policy.model import (
    Action,
    AttributeConstraint,
    Comparator,
    DeploymentManifest,
    DuplicateResourceError,
    ManifestEntry,
    ManifestSyntaxError,
    PolicyError,
    ResourceAccessRule,
    UnknownActionError,
    normalize_resource_id,
    parse_action,
    parse_attribute,
)

_WRAPPER = "naca-document"
_CONTAINERS = {"Manifest", "Rules", "Target", "AccessMask"}
_GRAMMAR = {"AnyOf", "AllOf", "Match", "AttributeValue", "AttributeDesignator"}
_MATCH_IDS = {"string-equal", "urn:oasis:names:tc:xacml:1.0:function:string-equal"}
_STRING_TYPES = {"string", "http://www.w3.org/2001/XMLSchema#string"}
_CATEGORIES = {"resource", "action"}
_XML_DECL = re.compile(r"^\s*<\?xml[^>]*\?>")


@dataclass
class _Node:
    tag: str
    attrs: dict[str, str]
    line: int
    column: int
    children: list["_Node"] = field(default_factory=list)
    text: str = ""

    def fail(self, message: str, cls: type[ManifestSyntaxError] = ManifestSyntaxError) -> ManifestSyntaxError:
        return cls(message, self.line, self.column)


def _build_tree(doc: str) -> _Node:
    if "<!DOCTYPE" in doc or "<!ENTITY" in doc:
        raise ManifestSyntaxError("DTDs and entity declarations are not accepted")
    # Blank out the declaration rather than deleting it so positions stay put.
    doc = _XML_DECL.sub(lambda m: " " * len(m.group(0)), doc, count=1)
    prefix = f"<{_WRAPPER}>"
    parser = expat.ParserCreate()
    stack: list[_Node] = []
    root: list[_Node] = []

    def position() -> tuple[int, int]:
        line, col = parser.CurrentLineNumber, parser.CurrentColumnNumber + 1
        if line == 1:
            col -= len(prefix)
        return line, col

    def start(tag: str, attrs: dict[str, str]) -> None:
        line, col = position()
        node = _Node(tag, dict(attrs), line, col)
        if stack:
            stack[-1].children.append(node)
        else:
            root.append(node)
        stack.append(node)

    def end(tag: str) -> None:
        stack.pop()

    def chars(data: str) -> None:
        if stack:
            stack[-1].text += data

    parser.StartElementHandler = start
    parser.EndElementHandler = end
    parser.CharacterDataHandler = chars
    try:
        parser.Parse(prefix + doc + f"</{_WRAPPER}>", True)
    except expat.ExpatError as exc:
        line, col = exc.lineno, exc.offset + 1
        if line == 1:
            col = max(1, col - len(prefix))
        raise ManifestSyntaxError(f"malformed XML: {expat.ErrorString(exc.code)}", line, col) from None
    return root[0]


def _top_level(doc: str) -> tuple[list[_Node], dict[str, str]]:
    wrapper = _build_tree(doc)
    nodes = wrapper.children
    if len(nodes) == 1 and nodes[0].tag in _CONTAINERS:
        return nodes[0].children, nodes[0].attrs
    return nodes, {}


@dataclass
class _MatchValue:
    category: str
    attribute_id: str
    value: str
    node: _Node


def _read_match(node: _Node) -> _MatchValue:
    if node.tag != "Match":
        raise node.fail(f"unexpected element <{node.tag}> inside <AllOf>")
    match_id = node.attrs.get("MatchId")
    if match_id not in _MATCH_IDS:
        raise node.fail(f"unsupported MatchId {match_id!r}")
    values = [c for c in node.children if c.tag == "AttributeValue"]
    designators = [c for c in node.children if c.tag == "AttributeDesignator"]
    for c in node.children:
        if c.tag not in ("AttributeValue", "AttributeDesignator"):
            raise c.fail(f"unexpected element <{c.tag}> inside <Match>")
    if len(values) != 1 or len(designators) != 1:
        raise node.fail("<Match> needs exactly one AttributeValue and one AttributeDesignator")
    value, designator = values[0], designators[0]
    if value.children or designator.children:
        raise node.fail("AttributeValue/AttributeDesignator must not contain elements")
    data_type = value.attrs.get("DataType")
    if data_type is not None and data_type not in _STRING_TYPES:
        raise value.fail(f"unsupported DataType {data_type!r}")
    category = designator.attrs.get("Category", "")
    if category not in _CATEGORIES:
        raise designator.fail(f"unsupported Category {category!r}")
    attribute_id = designator.attrs.get("AttributeId", "").strip()
    if not attribute_id:
        raise designator.fail("AttributeDesignator lacks AttributeId")
    text = value.text.strip()
    if not text:
        raise value.fail("empty AttributeValue")
    return _MatchValue(category, attribute_id, text, node)


@dataclass
class _Group:
    category: str
    all_ofs: list[tuple[_Node, list[_MatchValue]]]
    node: _Node


def _read_groups(nodes: Iterable[_Node]) -> list[_Group]:
    groups = []
    for any_of in nodes:
        if any_of.tag != "AnyOf":
            kind = "unknown" if any_of.tag not in _GRAMMAR else "misplaced"
            raise any_of.fail(f"{kind} element <{any_of.tag}> at top level")
        all_ofs = []
        categories = set()
        for all_of in any_of.children:
            if all_of.tag != "AllOf":
                raise all_of.fail(f"unexpected element <{all_of.tag}> inside <AnyOf>")
            matches = [_read_match(m) for m in all_of.children]
            if not matches:
                raise all_of.fail("empty <AllOf>")
            categories.update(m.category for m in matches)
            all_ofs.append((all_of, matches))
        if not all_ofs:
            continue
        if len(categories) != 1:
            raise any_of.fail("an <AnyOf> mixes resource and action matches")
        groups.append(_Group(categories.pop(), all_ofs, any_of))
    return groups


def _resource_of(all_of: _Node, matches: list[_MatchValue]) -> str:
    ids = {normalize_resource_id(m.value) for m in matches if m.attribute_id == "resource-id"}
    if not ids:
        raise all_of.fail("resource <AllOf> has no resource-id match")
    if len(ids) > 1:
        raise all_of.fail(f"conflicting resource-id values {sorted(ids)}")
    return ids.pop()


def _actions_of(group: _Group) -> frozenset[Action]:
    actions = set()
    for _, matches in group.all_ofs:
        for m in matches:
            if m.attribute_id != "action-id":
                raise m.node.fail(f"unsupported action attribute {m.attribute_id!r}")
            try:
                actions.add(parse_action(m.value))
            except UnknownActionError as exc:
                raise m.node.fail(str(exc), UnknownActionError) from None
    return frozenset(actions)


def _paired(groups: list[_Group]) -> list[tuple[_Group, _Group | None]]:
    pairs: list[tuple[_Group, _Group | None]] = []
    for g in groups:
        if g.category == "resource":
            pairs.append((g, None))
        elif pairs and pairs[-1][1] is None:
            pairs[-1] = (pairs[-1][0], g)
        else:
            raise g.node.fail("action <AnyOf> without a preceding resource <AnyOf>")
    return pairs


def _parse_manifest_xml(doc: str, app_id: str | None) -> DeploymentManifest:
    nodes, attrs = _top_level(doc)
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    for resource_group, action_group in _paired(_read_groups(nodes)):
        if action_group is None:
            raise resource_group.node.fail("resource <AnyOf> is not followed by its actions")
        actions = _actions_of(action_group)
        for all_of, matches in resource_group.all_ofs:
            for m in matches:
                if m.attribute_id != "resource-id":
                    raise m.node.fail(f"attribute {m.attribute_id!r} is not allowed in a deployment manifest")
            resource = _resource_of(all_of, matches)
            if resource in seen:
                raise all_of.fail(f"resource {resource!r} declared twice", DuplicateResourceError)
            seen.add(resource)
            entries.append(ManifestEntry(resource, actions))
    return DeploymentManifest(app_id or attrs.get("AppId", ""), tuple(entries))


def _parse_rules_xml(doc: str) -> list[ResourceAccessRule]:
    nodes, _ = _top_level(doc)
    rules: list[ResourceAccessRule] = []
    for resource_group, action_group in _paired(_read_groups(nodes)):
        actions = _actions_of(action_group) if action_group is not None else None
        for all_of, matches in resource_group.all_ofs:
            resource = _resource_of(all_of, matches)
            constraints = []
            for m in matches:
                if m.attribute_id == "resource-id":
                    continue
                try:
                    constraints.append(AttributeConstraint.equals(parse_attribute(m.attribute_id), m.value))
                except PolicyError as exc:
                    raise m.node.fail(str(exc)) from None
            rule_id = all_of.attrs.get("RuleId") or f"r{len(rules) + 1}"
            try:
                rules.append(ResourceAccessRule(resource, tuple(constraints), rule_id, actions))
            except PolicyError as exc:
                raise all_of.fail(str(exc)) from None
    return rules


def _check_keys(obj: dict, allowed: set[str], required: set[str], what: str) -> None:
    if not isinstance(obj, dict):
        raise ManifestSyntaxError(f"{what} must be a JSON object")
    extra = set(obj) - allowed
    if extra:
        raise ManifestSyntaxError(f"unknown {what} keys {sorted(extra)}")
    missing = required - set(obj)
    if missing:
        raise ManifestSyntaxError(f"{what} lacks keys {sorted(missing)}")


def _parse_manifest_json(obj: Any, app_id: str | None) -> DeploymentManifest:
    _check_keys(obj, {"app_id", "entries"}, {"entries"}, "manifest")
    if not isinstance(obj["entries"], list):
        raise ManifestSyntaxError("manifest entries must be a list")
    entries = []
    seen: set[str] = set()
    for i, raw in enumerate(obj["entries"]):
        _check_keys(raw, {"resource", "actions"}, {"resource", "actions"}, f"manifest entry {i}")
        resource = normalize_resource_id(str(raw["resource"]))
        if resource in seen:
            raise DuplicateResourceError(f"resource {resource!r} declared twice (entry {i})")
        seen.add(resource)
        entries.append(ManifestEntry(resource, frozenset(parse_action(a) for a in raw["actions"])))
    return DeploymentManifest(app_id or obj.get("app_id", ""), tuple(entries))


def _rule_from_json(raw: dict, index: int) -> ResourceAccessRule:
    _check_keys(raw, {"rule_id", "resource", "constraints", "actions"}, {"resource"}, f"rule {index}")
    constraints = []
    for c in raw.get("constraints", []):
        _check_keys(c, {"attribute", "comparator", "values", "value"}, {"attribute"}, "constraint")
        values = c.get("values", [c["value"]] if "value" in c else [])
        comparator = Comparator(c.get("comparator", "equals"))
        constraints.append(AttributeConstraint(parse_attribute(c["attribute"]), comparator, tuple(values)))
    actions = raw.get("actions")
    return ResourceAccessRule(
        raw["resource"],
        tuple(constraints),
        raw.get("rule_id") or f"r{index + 1}",
        None if actions is None else frozenset(parse_action(a) for a in actions),
    )


def _load(doc: Any) -> Any:
    if isinstance(doc, Path):
        doc = doc.read_text(encoding="utf-8")
    if isinstance(doc, bytes):
        doc = doc.decode("utf-8")
    if isinstance(doc, str) and doc.lstrip().startswith(("{", "[")):
        try:
            return json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ManifestSyntaxError(f"malformed JSON: {exc.msg}", exc.lineno, exc.colno) from None
    return doc


def parse_manifest(doc: Any, app_id: str | None = None) -> DeploymentManifest:
    """Parse a manifest given as XML text, JSON text, a JSON-like dict or a path."""
    doc = _load(doc)
    if isinstance(doc, dict):
        return _parse_manifest_json(doc, app_id)
    if isinstance(doc, str):
        return _parse_manifest_xml(doc, app_id)
    raise ManifestSyntaxError(f"cannot parse a manifest from {type(doc).__name__}")


def parse_rules(doc: Any) -> list[ResourceAccessRule]:
    """Parse operator resource access rules (XML, JSON text, dict/list, or path)."""
    doc = _load(doc)
    if isinstance(doc, dict):
        _check_keys(doc, {"rules"}, {"rules"}, "rule file")
        doc = doc["rules"]
    if isinstance(doc, list):
        return [_rule_from_json(r, i) for i, r in enumerate(doc)]
    if isinstance(doc, str):
        return _parse_rules_xml(doc)
    raise ManifestSyntaxError(f"cannot parse rules from {type(doc).__name__}")


def _ordered_actions(actions: Iterable[Action]) -> list[Action]:
    order = list(Action)
    return sorted(actions, key=order.index)


def _match(value: str, attribute_id: str, category: str, indent: str) -> str:
    return (
        f'{indent}<Match MatchId="string-equal">\n'
        f"{indent}  <AttributeValue>{escape(value)}</AttributeValue>\n"
        f"{indent}  <AttributeDesignator AttributeId={quoteattr(attribute_id)} Category={quoteattr(category)}/>\n"
        f"{indent}</Match>\n"
    )


def _action_group(actions: Iterable[Action]) -> str:
    body = "".join(
        "    <AllOf>\n" + _match(a.value, "action-id", "action", "      ") + "    </AllOf>\n"
        for a in _ordered_actions(actions)
    )
    return "  <AnyOf>\n" + body + "  </AnyOf>\n"


def serialize_manifest_xml(dm: DeploymentManifest) -> str:
    out = [f"<Manifest AppId={quoteattr(dm.app_id)}>\n"]
    for e in dm.entries:
        out.append("  <AnyOf>\n    <AllOf>\n")
        out.append(_match(e.resource, "resource-id", "resource", "      "))
        out.append("    </AllOf>\n  </AnyOf>\n")
        out.append(_action_group(e.actions))
    out.append("</Manifest>\n")
    return "".join(out)


def manifest_to_json(dm: DeploymentManifest) -> dict[str, Any]:
    return {
        "app_id": dm.app_id,
        "entries": [{"resource": e.resource, "actions": [a.value for a in _ordered_actions(e.actions)]} for e in dm.entries],
    }


def serialize_manifest_json(dm: DeploymentManifest) -> str:
    return json.dumps(manifest_to_json(dm), indent=2)


def rules_to_json(rules: Iterable[ResourceAccessRule]) -> dict[str, Any]:
    out = []
    for r in rules:
        item: dict[str, Any] = {
            "rule_id": r.rule_id,
            "resource": r.resource,
            "constraints": [
                {"attribute": c.attribute.value, "comparator": c.comparator.value, "values": list(c.values)}
                for c in r.constraints
            ],
        }
        if r.actions is not None:
            item["actions"] = [a.value for a in _ordered_actions(r.actions)]
        out.append(item)
    return {"rules": out}
