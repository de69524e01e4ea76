"""Operator policy sets, access-mask computation and conflict detection."""

from __future__ import annotations

from enum import Enum
from typing import Iterable, Mapping

from naca.policy.model import (
    AccessMask,
    AccessModel,
    AccessModelVariant,
    Attribute,
    Conflict,
    ConflictReport,
    ContractBreach,
    DeploymentManifest,
    MaskTuple,
    OperatorPolicySet,
    ResourceAccessRule,
)


def validate_requested_resources(dm: DeploymentManifest, catalogue: Iterable[str]) -> list[str]:
    """Return the manifest resources missing from ``catalogue``; empty means ok."""
    available = set(catalogue)
    if not available:
        raise ContractBreach("resource catalogue must be non-empty")
    return [r for r in dm.resources if r not in available]


def build_operator_policy_set(rules: Iterable[ResourceAccessRule], dm: DeploymentManifest) -> OperatorPolicySet:
    wanted = set(dm.resources)
    return OperatorPolicySet(tuple(r for r in rules if r.resource in wanted))


def access_mask_mapping(op_set: OperatorPolicySet, dm: DeploymentManifest) -> list[tuple[int, int]]:
    """The rule-to-entry mapping as ``(rule index, entry index)`` pairs.

    A rule maps to the entry naming the same resource; a rule naming a
    resource outside the manifest breaks the mapping's codomain.
    """
    index = {e.resource: i for i, e in enumerate(dm.entries)}
    pairs = []
    for ri, rule in enumerate(op_set.rules):
        if rule.resource not in index:
            raise ContractBreach(f"rule {rule.rule_id!r} references {rule.resource!r}, absent from the manifest")
        pairs.append((ri, index[rule.resource]))
    return pairs


def compute_access_mask(op_set: OperatorPolicySet, dm: DeploymentManifest, model: AccessModel) -> AccessMask:
    """Combine manifest entries with the operator rules mapped onto them.

    Permitted actions are the manifest's actions narrowed by every rule that
    carries an action restriction; rules can narrow but never widen.
    """
    attached: dict[int, list[ResourceAccessRule]] = {i: [] for i in range(len(dm.entries))}
    for ri, ei in access_mask_mapping(op_set, dm):
        attached[ei].append(op_set.rules[ri])
    tuples = []
    for ei, entry in enumerate(dm.entries):
        actions = set(entry.actions)
        for rule in attached[ei]:
            if rule.actions is not None:
                actions &= rule.actions
        tuples.append(MaskTuple(entry.resource, frozenset(actions), tuple(attached[ei])))
    return AccessMask(dm.app_id, tuple(tuples), model)


class MappingKind(Enum):
    SURJECTIVE = "surjective"
    BIJECTIVE = "bijective"
    INJECTIVE = "injective"
    PARTIAL = "partial"


def classify_mapping(op_set: OperatorPolicySet, dm: DeploymentManifest) -> MappingKind:
    pairs = access_mask_mapping(op_set, dm)
    images = [ei for _, ei in pairs]
    injective = len(set(images)) == len(images)
    surjective = set(images) == set(range(len(dm.entries)))
    if injective and surjective:
        return MappingKind.BIJECTIVE
    if surjective:
        return MappingKind.SURJECTIVE
    if injective:
        return MappingKind.INJECTIVE
    return MappingKind.PARTIAL


def models_compatible(a: AccessModel, b: AccessModel) -> tuple[bool, str]:
    """Whether two applications may both hold overlapping slices of one resource.

    Truth table: any exclusive variant clashes with everything; otherwise the
    variants must match, and two shared-priority holders need distinct
    priorities so arbitration is well defined.
    """
    if a.exclusive or b.exclusive:
        return False, "exclusivity"
    if a.variant is not b.variant:
        return False, f"model mismatch {a.variant.value}/{b.variant.value}"
    if a.variant is AccessModelVariant.SHARED_PRIORITY and a.priority == b.priority:
        return False, f"equal priority {a.priority}"
    return True, ""


def slice_overlap(a: MaskTuple, b: MaskTuple) -> tuple[bool, tuple[tuple[str, tuple[str, ...]], ...]]:
    """Whether the attribute slices two tuples grant on a resource intersect.

    Returns the overlap flag and, per attribute both sides constrain, the
    shared values.
    """
    shared = []
    for attribute in Attribute:
        va = a.allowed_values(attribute)
        vb = b.allowed_values(attribute)
        if (va is not None and not va) or (vb is not None and not vb):
            return False, ()
        if va is not None and vb is not None:
            common = va & vb
            if not common:
                return False, ()
            shared.append((attribute.value, tuple(sorted(common))))
    return True, tuple(shared)


def delegation_root(masks: Mapping[str, AccessMask], app_id: str) -> str:
    seen = set()
    current = app_id
    while current in masks and masks[current].parent is not None and current not in seen:
        seen.add(current)
        current = masks[current].parent  # type: ignore[assignment]
    return current


def detect_conflicts(candidate: AccessMask, installed: Mapping[str, AccessMask]) -> ConflictReport:
    """Check ``candidate`` against every installed mask.

    Recursion order: shared resource, then model compatibility of the two
    holders, then overlap of the attribute values their rules admit. Masks in
    the same delegation family never conflict with each other.
    """
    registry = dict(installed)
    registry.setdefault(candidate.app_id, candidate)
    candidate_root = delegation_root(registry, candidate.app_id)
    found = []
    for other_id in sorted(installed):
        other = installed[other_id]
        if other_id == candidate.app_id or delegation_root(registry, other_id) == candidate_root:
            continue
        compatible, reason = models_compatible(candidate.model, other.model)
        if compatible:
            continue
        for mine in candidate.tuples:
            theirs = other.tuple_for(mine.resource)
            if theirs is None:
                continue
            overlap, attributes = slice_overlap(mine, theirs)
            if overlap:
                rule_ids = tuple(r.rule_id for r in mine.rules) + tuple(r.rule_id for r in theirs.rules)
                found.append(Conflict(candidate.app_id, other_id, mine.resource, reason, rule_ids, attributes))
    return ConflictReport(tuple(found))
