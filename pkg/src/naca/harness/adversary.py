"""Randomised attack campaigns against the pipeline.

Each campaign enrolls a few applications with random manifests, rules and
access models, then interleaves benign requests with three classes of attack:

* over-reaching applications (resources outside the manifest, bad
  credentials, unknown identities);
* tampering with the authenticated channels (flipped tag-record bytes,
  re-attributed or replayed batches, replayed or forged sealed queries);
* a compromised controller (delays, reorders, forged or rewritten queries,
  dropped batches, compilation under another application's mask).

After every campaign the soundness oracle inspects what the NIB executed.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass, field, replace
from typing import Any

from naca.controller.intents import INTENT_RESOURCES, RESOURCE_CATALOGUE, Intent, IntentKind, QueryOp
from naca.controller.mock import Fault, FaultKind
from naca.harness.oracle import Violation, check_pipeline
from naca.mano import EnrollmentError
from naca.nib import FIXTURE_DIR, SealedQuery, load_topology
from naca.pipeline import Pipeline
from naca.policy.model import (
    Action,
    AccessModel,
    AccessModelVariant,
    AttributeConstraint,
    DeploymentManifest,
    ManifestEntry,
    PolicyError,
    ResourceAccessRule,
)
from naca.tagger import TagRecord

_TOPOLOGY = json.loads((FIXTURE_DIR / "mesh5.json").read_text())
_NODES = [n["id"] for n in _TOPOLOGY["nodes"]]
_HOSTS = [h["id"] for h in _TOPOLOGY["hosts"]]
_IPS = [h["ip"] for h in _TOPOLOGY["hosts"]]
_RESOURCES = sorted(RESOURCE_CATALOGUE)
_VARIANTS = [v for v in AccessModelVariant]
_ATTR_VALUES = {
    "jurisdiction": ["region-A", "region-B", "region-C"],
    "placement": ["edge", "core"],
    "modification_type": ["read", "modify"],
    "time": ["continuous", "discrete"],
}


@dataclass
class CampaignResult:
    seed: int
    violations: list[Violation]
    accepted: int
    rejected: int
    dropped: int
    attacks: dict[str, int] = field(default_factory=dict)


@dataclass
class SuiteSummary:
    runs: int
    seed: int
    violations: int
    accepted: int
    rejected: int
    dropped: int
    attacks: dict[str, int]
    seconds: float
    failing_seeds: list[int]

    def lines(self) -> list[str]:
        out = [
            f"campaigns: {self.runs} (seed {self.seed}) in {self.seconds:.1f}s",
            f"batches accepted: {self.accepted}, rejected: {self.rejected}; requests dropped at tagger: {self.dropped}",
            "attacks: " + ", ".join(f"{k}={v}" for k, v in sorted(self.attacks.items())),
            f"soundness violations: {self.violations}",
        ]
        if self.failing_seeds:
            out.append(f"failing campaign seeds: {self.failing_seeds[:20]}")
        return out


def random_rule(rng: random.Random, resource: str, idx: int) -> ResourceAccessRule:
    attrs = rng.sample(sorted(_ATTR_VALUES), rng.randint(1, 2))
    constraints = []
    for a in attrs:
        values = rng.sample(_ATTR_VALUES[a], rng.randint(1, len(_ATTR_VALUES[a])))
        constraints.append(
            AttributeConstraint.equals(a, values[0]) if len(values) == 1 else AttributeConstraint.one_of(a, values)
        )
    actions = None
    if rng.random() < 0.3:
        actions = frozenset(rng.sample(list(Action), rng.randint(1, 3)))
    return ResourceAccessRule(resource, tuple(constraints), f"r{idx}", actions)


def random_manifest(rng: random.Random, app_id: str) -> DeploymentManifest:
    resources = rng.sample(_RESOURCES, rng.randint(1, len(_RESOURCES)))
    entries = [ManifestEntry(r, frozenset(rng.sample(list(Action), rng.randint(1, 3)))) for r in resources]
    return DeploymentManifest(app_id, tuple(entries))


def random_intent(rng: random.Random, within: frozenset[str] | None = None) -> Intent:
    kinds = [k for k in IntentKind if k is not IntentKind.WITHDRAW]
    if within is not None:
        kinds = [k for k in kinds if INTENT_RESOURCES[k] <= within] or kinds
    kind = rng.choice(kinds)
    node = rng.choice(_NODES + ["s9"])
    if kind is IntentKind.CONNECTIVITY:
        a, b = rng.sample(_HOSTS, 2)
        return Intent.make(kind, src_host=a, dst_host=b, protocol=rng.choice(["udp", "TCP"]),
                           src_port=rng.randint(1, 65535), dst_port=rng.randint(1, 65535))
    if kind is IntentKind.FLOW_INSTALL:
        a, b = rng.sample(_IPS, 2)
        return Intent.make(kind, node=node, src_ip=a, dst_ip=b, protocol="UDP", src_port=5000, dst_port=5001)
    if kind in (IntentKind.NODE_LTPS, IntentKind.STATS_READ, IntentKind.CONFIG_READ):
        return Intent.make(kind, node=node)
    if kind is IntentKind.CONFIG_MOD:
        return Intent.make(kind, node=node, key="mtu", value=str(rng.choice([1500, 9000])))
    return Intent.make(kind)


def random_query_spec(rng: random.Random, apps: list[str]) -> dict[str, Any]:
    op = rng.choice(list(QueryOp))
    spec: dict[str, Any] = {"op": op.value, "target": "*" if op in (QueryOp.TOPO_READ, QueryOp.SUBSCRIBE) else rng.choice(_NODES + ["s9"])}
    args: dict[str, Any] = {}
    if op is QueryOp.FLOW_INSTALL:
        args = {"src_ip": rng.choice(_IPS), "dst_ip": rng.choice(_IPS), "proto": "UDP", "src_port": 1, "dst_port": 2}
    elif op is QueryOp.TOPO_READ and rng.random() < 0.5:
        args = {"scope_jurisdiction": "region-A,region-B"}
    elif op is QueryOp.CONFIG_MOD:
        args = {"key": "mtu", "value": "9000"}
    spec["args"] = args
    if apps and rng.random() < 0.2:
        spec["app_id"] = rng.choice(apps)
    return spec


def random_fault(rng: random.Random, apps: list[str]) -> Fault:
    kind = rng.choice(list(FaultKind))
    if kind is FaultKind.DELAY:
        return Fault(kind, k=rng.randint(1, 4))
    if kind is FaultKind.REORDER:
        perm = list(range(rng.randint(2, 3)))
        rng.shuffle(perm)
        return Fault(kind, perm=tuple(perm))
    if kind in (FaultKind.FORGE_EXTRA, FaultKind.REWRITE):
        return Fault(kind, queries=tuple(random_query_spec(rng, apps) for _ in range(rng.randint(1, 2))))
    if kind is FaultKind.SWAP_MASK:
        return Fault(kind, app_id=rng.choice(apps + [None]) if apps else None)
    return Fault(kind)


class _Campaign:
    def __init__(self, seed: int) -> None:
        self.rng = random.Random(seed)
        self.seed = seed
        rng = self.rng
        self.p = Pipeline(
            load_topology(_TOPOLOGY), seed=seed, window=rng.choice([1, 2, 2, 3]),
            mitigation=rng.choice(["quarantine", "log", "log", "log"]),
        )
        self.apps: list[str] = []
        self.attacks: dict[str, int] = {}
        self.dropped = 0
        self.pending_record_flip = False
        self.sealed_seen: list[SealedQuery] = []
        nib_execute = self.p.nib.execute
        # Observe sealed traffic so it can be replayed later.
        self.p.monitor._emit[0] = lambda sq: (self.sealed_seen.append(sq), nib_execute(sq))[1]

    def count(self, name: str) -> None:
        self.attacks[name] = self.attacks.get(name, 0) + 1

    def enroll_apps(self) -> None:
        rng = self.rng
        rule_idx = 0
        for i in range(rng.randint(2, 4)):
            app_id = f"app{i}"
            dm = random_manifest(rng, app_id)
            rules = []
            for r in dm.resources:
                if rng.random() < 0.6:
                    rules.append(random_rule(rng, r, rule_idx))
                    rule_idx += 1
            variant = rng.choice(_VARIANTS)
            model = AccessModel(variant, rng.randint(0, 3))
            try:
                self.p.enroll(app_id, dm, model, rules)
                self.apps.append(app_id)
            except (EnrollmentError, PolicyError):
                pass
        delegators = [a for a in self.apps if self.p.mano.apps[a].model.delegable]
        if delegators and rng.random() < 0.5:
            parent = rng.choice(delegators)
            n = len(self.p.mano.apps[parent].mask.tuples)
            child = f"del{parent}"
            self.p.delegate(parent, child, rng.sample(range(n), rng.randint(0, n)))
            self.apps.append(child)

    def step(self) -> None:
        rng = self.rng
        roll = rng.random()
        apps = self.apps or ["ghost"]
        if roll < 0.35:
            self.benign(rng.choice(apps))
        elif roll < 0.5:
            self.vector1(apps)
        elif roll < 0.75:
            self.count("controller_fault")
            self.p.fault(random_fault(rng, self.apps))
            self.benign(rng.choice(apps))
        elif roll < 0.95:
            self.vector2(apps)
        elif self.apps:
            victim = rng.choice(self.apps)
            if self.p.mano.apps[victim].status.value != "terminated":
                self.count("terminate")
                self.p.terminate(victim)

    def benign(self, app: str) -> str | None:
        record = self.p.mano.apps.get(app)
        within = frozenset(record.mask.resources) if record is not None else None
        return self.request(app, random_intent(self.rng, within))

    def request(self, app: str, intent: Intent, resources=None, credential=None) -> str | None:
        rid = self.p.request(app, intent, resources, credential)
        if rid is None:
            self.dropped += 1
        return rid

    def vector1(self, apps: list[str]) -> None:
        rng = self.rng
        choice = rng.randrange(3)
        if choice == 0:
            self.count("v1_outside_manifest")
            res = rng.sample(_RESOURCES + ["qos"], rng.randint(1, 3))
            self.request(rng.choice(apps), random_intent(rng), res)
        elif choice == 1:
            self.count("v1_bad_credential")
            self.request(rng.choice(apps), random_intent(rng), credential="00" * 16)
        else:
            self.count("v1_unknown_app")
            self.request("intruder", random_intent(rng), credential="")

    def vector2(self, apps: list[str]) -> None:
        rng = self.rng
        p = self.p
        choice = rng.randrange(6)
        if choice == 0:
            self.count("v2_flip_record")
            flip_at = rng.random()

            def tap(record: TagRecord) -> bytes:
                raw = bytearray(record.to_bytes())
                pos = int(flip_at * len(raw))
                raw[pos] ^= rng.randint(1, 255)
                p.record_tap = None
                return bytes(raw)

            p.record_tap = tap
            self.request(rng.choice(apps), random_intent(rng))
        elif choice == 1:
            self.count("v2_reattribute_batch")
            issued = [t.request_id for t in p.tagger.issued]

            def btap(app_id, request_id, batch):
                p.batch_tap = None
                other = rng.choice(issued) if issued else request_id
                other_app = other.split("/")[0]
                return [(other_app, other, [replace(q, app_id=other_app, request_id=other) for q in batch])]

            p.batch_tap = btap
            self.request(rng.choice(apps), random_intent(rng))
        elif choice == 2:
            self.count("v2_replay_batch")
            if p.delivered:
                app_id, rid, batch = rng.choice(p.delivered)
                p.monitor.verify_batch(batch, app_id, rid)
        elif choice == 3:
            self.count("v2_replay_sealed")
            if self.sealed_seen:
                p.nib.execute(rng.choice(self.sealed_seen))
        elif choice == 4:
            self.count("v2_forge_sealed")
            if self.sealed_seen:
                sq = rng.choice(self.sealed_seen)
                spec = random_query_spec(rng, self.apps)
                forged_q = replace(sq.query, op=QueryOp(spec["op"]), target=spec["target"])
                p.nib.execute(SealedQuery(forged_q, rng.randbytes(16), sq.mac))
            p.nib.execute(rng.choice(self.sealed_seen).query if self.sealed_seen else None)
        else:
            self.count("v2_replay_record")
            if p.tagger.issued:
                t = rng.choice(p.tagger.issued)
                rec = p.monitor._by_request.get(t.request_id)
                if rec is not None:
                    p.monitor.receive_tag_record(replace(rec, counter=rec.counter + rng.randint(0, 3)))

    def run(self) -> CampaignResult:
        self.enroll_apps()
        for _ in range(self.rng.randint(6, 14)):
            self.step()
        self.p.flush()
        verdicts = self.p.final_verdicts
        accepted = sum(1 for v in verdicts if v.decision.value == "accept")
        return CampaignResult(
            self.seed, check_pipeline(self.p), accepted, len(verdicts) - accepted, self.dropped, self.attacks
        )


def run_campaign(seed: int) -> tuple[CampaignResult, Pipeline]:
    campaign = _Campaign(seed)
    return campaign.run(), campaign.p


def adversary_suite(seed: int = 0, n_runs: int = 1000) -> SuiteSummary:
    master = random.Random(seed)
    start = time.perf_counter()
    totals = {"violations": 0, "accepted": 0, "rejected": 0, "dropped": 0}
    attacks: dict[str, int] = {}
    failing = []
    for _ in range(n_runs):
        result, _ = run_campaign(master.getrandbits(63))
        totals["violations"] += len(result.violations)
        totals["accepted"] += result.accepted
        totals["rejected"] += result.rejected
        totals["dropped"] += result.dropped
        for k, v in result.attacks.items():
            attacks[k] = attacks.get(k, 0) + v
        if result.violations:
            failing.append(result.seed)
    return SuiteSummary(
        n_runs, seed, totals["violations"], totals["accepted"], totals["rejected"], totals["dropped"],
        attacks, time.perf_counter() - start, failing,
    )
