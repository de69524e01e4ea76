"""Brute-force reference implementations used to cross-check the package.

Each oracle recomputes a result from its definition by exhaustive
enumeration, with no shared code beyond the value types.
"""

from __future__ import annotations

import itertools
import random
from collections import deque
from typing import Iterable, Mapping

import networkx as nx

from naca.policy.model import (
    AccessMask,
    AccessModel,
    AccessModelVariant,
    Action,
    Attribute,
    AttributeConstraint,
    DeploymentManifest,
    ManifestEntry,
    MaskTuple,
    ResourceAccessRule,
)

SENTINEL = "<unlisted>"

EXCLUSIVE = {"direct_explicit", "exclusive_longterm", "exclusive_dynamic", "commons_private"}

ATTRIBUTE_VALUES = {
    "jurisdiction": ["region-A", "region-B", "region-C"],
    "placement": ["edge", "core", "access"],
    "modification_type": ["read", "modify"],
    "time": ["continuous", "discrete"],
}


# -- mask computation -------------------------------------------------------


def oracle_mask(rules: list[ResourceAccessRule], dm: DeploymentManifest) -> list[tuple[str, frozenset, tuple]]:
    """For every manifest entry: (resource, permitted actions, attached rules)."""
    out = []
    for entry in dm.entries:
        attached = tuple(r for r in rules if r.resource == entry.resource)
        permitted = frozenset(
            a for a in Action
            if a in entry.actions and all(r.actions is None or a in r.actions for r in attached)
        )
        out.append((entry.resource, permitted, attached))
    return out


def oracle_classify(rules: list[ResourceAccessRule], dm: DeploymentManifest) -> str:
    """Classify the rule-to-entry function by checking its definitions pairwise."""
    relevant = [r for r in rules if r.resource in dm.resources]
    image = [dm.resources.index(r.resource) for r in relevant]
    injective = all(image[i] != image[j] for i in range(len(image)) for j in range(len(image)) if i != j)
    surjective = all(any(image[i] == e for i in range(len(image))) for e in range(len(dm.entries)))
    if injective and surjective:
        return "bijective"
    if surjective:
        return "surjective"
    if injective:
        return "injective"
    return "partial"


# -- conflicts --------------------------------------------------------------


def _universe(tuples: Iterable[MaskTuple]) -> dict[str, list[str]]:
    values: dict[str, set[str]] = {a.value: {SENTINEL} for a in Attribute}
    for t in tuples:
        for r in t.rules:
            for c in r.constraints:
                values[c.attribute.value].update(c.values)
    return {k: sorted(v) for k, v in values.items()}


def _admits_point(t: MaskTuple, point: Mapping[str, str]) -> bool:
    return all(point[c.attribute.value] in c.values for r in t.rules for c in r.constraints)


def oracle_overlap(a: MaskTuple, b: MaskTuple) -> bool:
    """Two slices overlap iff some attribute point is admitted by both."""
    universe = _universe([a, b])
    names = sorted(universe)
    for combo in itertools.product(*(universe[n] for n in names)):
        point = dict(zip(names, combo))
        if _admits_point(a, point) and _admits_point(b, point):
            return True
    return False


def oracle_compatible(a: AccessModel, b: AccessModel) -> bool:
    table_ok = a.variant.value not in EXCLUSIVE and b.variant.value not in EXCLUSIVE
    if not table_ok or a.variant.value != b.variant.value:
        return False
    return not (a.variant.value == "shared_priority" and a.priority == b.priority)


def _family(masks: Mapping[str, AccessMask], app: str) -> str:
    path = [app]
    while path[-1] in masks and masks[path[-1]].parent is not None and masks[path[-1]].parent not in path:
        path.append(masks[path[-1]].parent)  # type: ignore[arg-type]
    return path[-1]


def oracle_conflicts(candidate: AccessMask, installed: Mapping[str, AccessMask]) -> set[tuple[str, str]]:
    """(other app, resource) pairs that conflict."""
    registry = {**installed, candidate.app_id: candidate}
    out = set()
    for other_id, other in installed.items():
        if other_id == candidate.app_id or _family(registry, other_id) == _family(registry, candidate.app_id):
            continue
        if oracle_compatible(candidate.model, other.model):
            continue
        for t in candidate.tuples:
            for u in other.tuples:
                if t.resource == u.resource and oracle_overlap(t, u):
                    out.add((other_id, t.resource))
    return out


# -- graphs -----------------------------------------------------------------


def oracle_reachable(edges: Mapping[str, Iterable[str]], start: str) -> set[str]:
    """Transitive closure by repeated relaxation, excluding ``start``."""
    reached = {start}
    changed = True
    while changed:
        changed = False
        for src, dsts in edges.items():
            if src in reached:
                for d in dsts:
                    if d not in reached:
                        reached.add(d)
                        changed = True
    return reached - {start}


def oracle_path(adjacency: Mapping[str, Iterable[str]], src: str, dst: str, allowed: set[str] | None = None) -> list[str] | None:
    """Lexicographically smallest among all shortest paths, via networkx."""
    g = nx.Graph()
    g.add_nodes_from(adjacency)
    for a, nbrs in adjacency.items():
        for b in nbrs:
            g.add_edge(a, b)
    if allowed is not None:
        g = g.subgraph([n for n in g if n in allowed])
    if src not in g or dst not in g:
        return None
    try:
        return min(nx.all_shortest_paths(g, src, dst))
    except nx.NetworkXNoPath:
        return None


def oracle_bfs_order(children: Mapping[str, Iterable[str]], start: str) -> list[str]:
    out, queue, seen = [], deque([start]), {start}
    while queue:
        for c in sorted(children.get(queue.popleft(), ())):
            if c not in seen:
                seen.add(c)
                out.append(c)
                queue.append(c)
    return out


# -- random instances -------------------------------------------------------


def random_constraint(rng: random.Random, attribute: str) -> AttributeConstraint:
    values = rng.sample(ATTRIBUTE_VALUES[attribute], rng.randint(1, len(ATTRIBUTE_VALUES[attribute])))
    if len(values) == 1 and rng.random() < 0.5:
        return AttributeConstraint.equals(attribute, values[0])
    return AttributeConstraint.one_of(attribute, values)


def random_rule(rng: random.Random, resource: str, rule_id: str) -> ResourceAccessRule:
    attrs = rng.sample(sorted(ATTRIBUTE_VALUES), rng.randint(0, 3))
    actions = frozenset(rng.sample(list(Action), rng.randint(1, len(Action)))) if rng.random() < 0.4 else None
    return ResourceAccessRule(resource, tuple(random_constraint(rng, a) for a in attrs), rule_id, actions)


def random_instance(
    rng: random.Random, resources: list[str], max_rules: int = 4
) -> tuple[DeploymentManifest, list[ResourceAccessRule], AccessModel]:
    """A manifest over a random subset of ``resources``, up to ``max_rules``
    rules (some naming resources outside the manifest) and a random model."""
    app = f"app{rng.randrange(1000)}"
    chosen = rng.sample(resources, rng.randint(1, len(resources)))
    dm = DeploymentManifest(
        app, tuple(ManifestEntry(r, frozenset(rng.sample(list(Action), rng.randint(1, len(Action))))) for r in chosen)
    )
    rules = [random_rule(rng, rng.choice(resources), f"rule-{i}") for i in range(rng.randint(0, max_rules))]
    variant = rng.choice(list(AccessModelVariant))
    return dm, rules, AccessModel(variant, rng.randint(0, 2))


# Written out from the lifecycle diagram, edge by edge; deliberately not
# derived from TRANSITIONS.
DIAGRAM_EDGES = [
    ("New", 1, "RequestTagger"),
    ("RequestTagger", 2, "InstallRequest"),
    ("InstallRequest", 3, "Compiling"),
    ("Compiling", 4, "Installing"),
    ("Recompiling", 4, "Installing"),
    ("Installing", 5, "RefMonitor"),
    ("RefMonitor", 6, "Installed"),
    ("Installed", 7, "Withdrawing"),
    ("Installed", 8, "Recompiling"),
    ("Failed", 9, "Recompiling"),
    ("Compiling", 10, "Failed"),
    ("Failed", 11, "Compiling"),
    ("Installing", 12, "Failed"),
    ("Failed", 13, "Installing"),
    ("Recompiling", 14, "Failed"),
    ("Failed", 15, "Withdrawn"),
    ("RefMonitor", 16, "Failed"),
    ("Failed", 17, "InstallRequest"),
    ("Withdrawing", 18, "Withdrawn"),
]


def oracle_window(arrivals: list[tuple[int, str]], owner: Mapping[int, str], w: int) -> list[tuple[int, str]]:
    """Settle a stream of (counter, app) arrivals under a window of ``w``,
    then flush. Returns (counter, verdict) in the order verdicts are final."""
    nxt, parked, skipped, out = 1, {}, set(), []
    for c, app in arrivals:
        if c < nxt or c in parked:
            out.append((c, "reject_window" if c in skipped else "reject_stale"))
            skipped.discard(c)
            continue
        if c == nxt:
            out.append((c, "accept"))
            nxt += 1
            while nxt in parked:
                del parked[nxt]
                out.append((nxt, "accept"))
                nxt += 1
            continue
        gap = [m for m in range(nxt, c) if m not in parked]
        if c - nxt <= w and len(parked) < w and all(owner.get(m) == app for m in gap):
            parked[c] = app
            continue
        out.extend((m, "reject_window") for m in sorted(parked))
        out.append((c, "reject_window"))
        skipped.update(gap)
        parked, nxt = {}, c + 1
    out.extend((m, "reject_window") for m in sorted(parked))
    return out
