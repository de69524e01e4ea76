"""Admission, delegation and revocation under the access-model taxonomy."""

from __future__ import annotations

import logging
from collections import deque
from enum import Enum
from typing import Iterable, Mapping

from naca.policy.algebra import delegation_root
from naca.policy.model import NEGOTIATED_VARIANTS, AccessMask, PolicyError

logger = logging.getLogger(__name__)


class Admission(Enum):
    GRANT = "grant"
    DENY = "deny"
    DEFER_TO_PRIORITY = "defer_to_priority"


class UnknownApplication(PolicyError):
    pass


class DelegationError(PolicyError):
    pass


def admit_under_model(
    masks: Mapping[str, AccessMask],
    resource: str,
    app_id: str,
    contenders: Iterable[str] = (),
) -> Admission:
    """Decide whether ``app_id`` may use ``resource`` right now.

    ``contenders`` are the other applications issuing conflicting requests on
    the same resource at the same time. Applications whose mask does not cover
    the resource are denied outright.
    """
    if app_id not in masks:
        raise UnknownApplication(app_id)
    rivals = []
    for c in contenders:
        if c not in masks:
            raise UnknownApplication(c)
        if c != app_id and masks[c].tuple_for(resource) is not None:
            rivals.append(c)
    mask = masks[app_id]
    if mask.tuple_for(resource) is None:
        return Admission.DENY
    if not rivals:
        return Admission.GRANT
    model = mask.model
    if model.variant in NEGOTIATED_VARIANTS:
        logger.info("admission of %s on %s deferred: negotiation protocol not modelled", app_id, resource)
        return Admission.DEFER_TO_PRIORITY
    if model.exclusive:
        # A holder's exclusive slice (shared with its own delegates) is its own.
        return Admission.GRANT
    ranked = sorted([app_id, *rivals], key=lambda a: (-masks[a].model.priority, a))
    return Admission.GRANT if ranked[0] == app_id else Admission.DENY


def derive_delegated_mask(parent: AccessMask, to: str, subset: Iterable[int]) -> AccessMask:
    if not parent.model.delegable:
        raise DelegationError(f"{parent.app_id} holds a non-delegable {parent.model.variant.value} mask")
    indices = sorted(set(subset))
    escaped = [i for i in indices if not 0 <= i < len(parent.tuples)]
    if escaped:
        raise DelegationError(f"tuple indices {escaped} are not part of {parent.app_id}'s mask")
    if to == parent.app_id:
        raise DelegationError("an application cannot delegate to itself")
    return AccessMask(to, tuple(parent.tuples[i] for i in indices), parent.model, parent=parent.app_id)


def delegation_children(masks: Mapping[str, AccessMask]) -> dict[str, list[str]]:
    children: dict[str, list[str]] = {}
    for app_id, mask in masks.items():
        if mask.parent is not None:
            children.setdefault(mask.parent, []).append(app_id)
    return {k: sorted(v) for k, v in children.items()}


def revocation_set(children: Mapping[str, Iterable[str]], terminated: str) -> list[str]:
    """Every application reachable from ``terminated`` over delegation edges,
    in breadth-first order (ties by app id)."""
    out: list[str] = []
    seen = {terminated}
    queue = deque([terminated])
    while queue:
        node = queue.popleft()
        for child in sorted(children.get(node, ())):
            if child not in seen:
                seen.add(child)
                out.append(child)
                queue.append(child)
    return out


__all__ = [
    "Admission",
    "DelegationError",
    "UnknownApplication",
    "admit_under_model",
    "delegation_children",
    "delegation_root",
    "derive_delegated_mask",
    "revocation_set",
]
