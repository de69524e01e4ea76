"""Scenario files: a seeded pipeline setup plus an ordered event list.

Schema (JSON)::

    {
      "name": "...", "seed": 7, "topology": "mesh5", "window": 2,
      "mitigation": "quarantine" | "log",
      "keys": {"K": "<64 hex>", "K_NIB": "<64 hex>"},          optional
      "operator_rules": <rules document or file name>,          optional
      "apps": {"<app>": {"manifest": <doc or file>, "model": {...}, "rules": <doc or file>}},
      "events": [
        {"type": "enroll", "app": "<app>"},
        {"type": "request", "app": "<app>", "intent": {"kind": ...}, "resources": [...], "credential": "...", "as": "<alias>"},
        {"type": "fault", "mode": "delay|reorder|forge_extra|drop_batch|swap_mask|rewrite", ...},
        {"type": "flush"},
        {"type": "terminate", "app": "<app>"},
        {"type": "delegate", "from": "<app>", "to": "<app>", "tuples": [0]},
        {"type": "expect", "kind": "...", ...}
      ]
    }

File references are resolved relative to the scenario file, then against the
shipped ``data/policies`` directory.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from naca.controller.intents import Intent
from naca.controller.mock import Fault
from naca.harness.oracle import check_pipeline
from naca.mano import EnrollmentError
from naca.pipeline import Pipeline
from naca.policy.grammar import parse_rules
from naca.policy.model import AccessModel, PolicyError

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).resolve().parent.parent / "data"
SCENARIO_DIR = DATA_DIR / "scenarios"
POLICY_DIR = DATA_DIR / "policies"

_EVENT_KEYS = {
    "enroll": {"app"},
    "request": {"app", "intent", "resources", "credential", "as"},
    "fault": {"mode", "k", "perm", "query", "queries", "app_id"},
    "flush": set(),
    "terminate": {"app"},
    "delegate": {"from", "to", "tuples"},
    "expect": {"kind", "request", "value", "index", "app", "alias", "note"},
}
_EXPECT_KINDS = {"verdicts", "verdict", "state", "nib_result", "dropped", "enrolled", "revoked", "violations"}


class ScenarioError(ValueError):
    pass


@dataclass
class Expectation:
    index: int
    kind: str
    passed: bool
    detail: str


@dataclass
class ScenarioReport:
    name: str
    seed: int
    expectations: list[Expectation] = field(default_factory=list)
    audit_jsonl: str = ""

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.expectations)

    def summary_lines(self) -> list[str]:
        lines = [
            f"{'PASS' if e.passed else 'FAIL'} [{e.index}] {e.kind}: {e.detail}" for e in self.expectations
        ]
        lines.append(f"{self.name}: {'PASS' if self.passed else 'FAIL'} ({len(self.expectations)} expectations)")
        return lines


def _resolve_doc(value: Any, base: Path | None) -> Any:
    if not isinstance(value, str) or value.lstrip().startswith(("<", "{", "[")):
        return value
    for root in ([base] if base else []) + [POLICY_DIR]:
        candidate = root / value
        if candidate.is_file():
            return candidate.read_text()
    raise ScenarioError(f"cannot find policy document {value!r}")


def load_scenario(path: str | Path) -> tuple[dict[str, Any], Path | None]:
    p = Path(path)
    if not p.exists() and (SCENARIO_DIR / p.name).exists():
        p = SCENARIO_DIR / p.name
    if not p.exists() and (SCENARIO_DIR / f"{p.name}.json").exists():
        p = SCENARIO_DIR / f"{p.name}.json"
    try:
        doc = json.loads(p.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"cannot load scenario {path}: {exc}") from None
    return doc, p.parent


def validate_scenario(doc: dict[str, Any]) -> None:
    allowed = {"name", "seed", "topology", "window", "mitigation", "keys", "operator_rules", "apps", "events", "description"}
    unknown = set(doc) - allowed
    if unknown:
        raise ScenarioError(f"unknown scenario keys {sorted(unknown)}")
    apps = doc.get("apps", {})
    if not isinstance(apps, dict):
        raise ScenarioError("'apps' must be an object")
    for i, ev in enumerate(doc.get("events", [])):
        kind = ev.get("type")
        if kind not in _EVENT_KEYS:
            raise ScenarioError(f"event {i}: unknown type {kind!r}")
        extra = set(ev) - _EVENT_KEYS[kind] - {"type"}
        if extra:
            raise ScenarioError(f"event {i}: unknown keys {sorted(extra)}")
        if kind == "enroll" and ev.get("app") not in apps:
            raise ScenarioError(f"event {i}: app {ev.get('app')!r} is not declared")
        if kind == "expect" and ev.get("kind") not in _EXPECT_KINDS:
            raise ScenarioError(f"event {i}: unknown expectation {ev.get('kind')!r}")


def _model(raw: dict[str, Any]) -> AccessModel:
    return AccessModel(raw["variant"], int(raw.get("priority", 0)), raw.get("delegable"))


def build_pipeline(doc: dict[str, Any], base: Path | None, seed: int | None = None) -> Pipeline:
    keys = doc.get("keys", {})
    rules = doc.get("operator_rules")
    topology = doc.get("topology", "mesh5")
    if isinstance(topology, str) and base is not None and (base / topology).is_file():
        topology = str(base / topology)
    return Pipeline(
        topology,
        seed=int(doc.get("seed", 0) if seed is None else seed),
        window=int(doc.get("window", 2)),
        mitigation=doc.get("mitigation", "quarantine"),
        key_hex=keys.get("K"),
        nib_key_hex=keys.get("K_NIB"),
        operator_rules=parse_rules(_resolve_doc(rules, base)) if rules is not None else (),
    )


class ScenarioRunner:
    def __init__(self, doc: dict[str, Any], base: Path | None = None, seed: int | None = None) -> None:
        validate_scenario(doc)
        self.doc = doc
        self.base = base
        self.pipeline = build_pipeline(doc, base, seed)
        self.report = ScenarioReport(doc.get("name", "scenario"), int(doc.get("seed", 0) if seed is None else seed))
        self.aliases: dict[str, str | None] = {}
        self.enrolled: dict[str, bool] = {}
        self.last_revoked: dict[str, list[str]] = {}

    def run(self) -> ScenarioReport:
        for i, ev in enumerate(self.doc.get("events", [])):
            getattr(self, f"_ev_{ev['type']}")(i, ev)
        self.report.audit_jsonl = self.pipeline.audit.to_jsonl()
        return self.report

    def _ev_enroll(self, i: int, ev: dict[str, Any]) -> None:
        app = ev["app"]
        spec = self.doc["apps"][app]
        manifest = _resolve_doc(spec["manifest"], self.base)
        rules = _resolve_doc(spec["rules"], self.base) if "rules" in spec else None
        try:
            self.pipeline.enroll(app, manifest, _model(spec.get("model", {"variant": "direct_explicit"})), rules)
            self.enrolled[app] = True
        except (EnrollmentError, PolicyError) as exc:
            logger.info("enrollment of %s rejected: %s", app, exc)
            self.enrolled[app] = False

    def _ev_request(self, i: int, ev: dict[str, Any]) -> None:
        rid = self.pipeline.request(
            ev["app"], Intent.from_json(ev["intent"]), ev.get("resources"), ev.get("credential")
        )
        self.aliases[ev.get("as", f"#{i}")] = rid

    def _ev_fault(self, i: int, ev: dict[str, Any]) -> None:
        self.pipeline.fault(Fault.from_json({k: v for k, v in ev.items() if k != "type"}))

    def _ev_flush(self, i: int, ev: dict[str, Any]) -> None:
        self.pipeline.flush()

    def _ev_terminate(self, i: int, ev: dict[str, Any]) -> None:
        self.last_revoked[ev["app"]] = self.pipeline.terminate(ev["app"])

    def _ev_delegate(self, i: int, ev: dict[str, Any]) -> None:
        self.pipeline.delegate(ev["from"], ev["to"], ev.get("tuples", []))

    def _request_id(self, ev: dict[str, Any]) -> str | None:
        if "alias" in ev:
            return self.aliases.get(ev["alias"])
        return ev.get("request")

    def _ev_expect(self, i: int, ev: dict[str, Any]) -> None:
        kind = ev["kind"]
        p = self.pipeline
        expected = ev.get("value")
        if kind == "verdicts":
            actual: Any = [[v.request_id, v.decision.value] for v in p.final_verdicts]
        elif kind == "verdict":
            d = p.verdict_for(self._request_id(ev) or "")
            actual = d.value if d else None
        elif kind == "state":
            s = p.controller.state_of(self._request_id(ev) or "")
            actual = s.value if s else None
        elif kind == "nib_result":
            results = p.results.get(self._request_id(ev) or "")
            actual = results[int(ev.get("index", 0))] if results else None
        elif kind == "dropped":
            actual = self._request_id(ev) is None
        elif kind == "enrolled":
            actual = self.enrolled.get(ev["app"])
        elif kind == "revoked":
            actual = self.last_revoked.get(ev["app"])
        else:
            actual = len(check_pipeline(p))
        passed = actual == expected
        detail = f"expected {expected!r}" + ("" if passed else f", got {actual!r}")
        self.report.expectations.append(Expectation(i, kind, passed, detail))


def run_scenario(path: str | Path, seed: int | None = None) -> ScenarioReport:
    doc, base = load_scenario(path)
    return ScenarioRunner(doc, base, seed).run()


def shipped_scenarios() -> list[Path]:
    return sorted(SCENARIO_DIR.glob("*.json"))
