"""Value types for manifests, operator rules and access masks.

Everything here is immutable. An :class:`AccessMask` computes its digest at
construction and can re-verify it at any time; there is no API that changes a
mask after it exists.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

from naca.authcode import canonical_encode, digest


class PolicyError(ValueError):
    """Base class for manifest, rule and mask errors."""


class ManifestSyntaxError(PolicyError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None) -> None:
        self.line = line
        self.column = column
        where = f" at line {line}, column {column}" if line is not None else ""
        super().__init__(f"{message}{where}")


class UnknownActionError(ManifestSyntaxError):
    pass


class DuplicateResourceError(ManifestSyntaxError):
    pass


class ContractBreach(PolicyError):
    """A caller violated an operation's precondition."""


class Action(Enum):
    # Declaration order is the canonical encoding order.
    READ = "read"
    STAT = "stat"
    CONFIG_READ = "config_read"
    CONFIG_MOD = "config_mod"
    SUBSCR = "subscr"


ACTION_ALIASES = {"modify": Action.CONFIG_MOD}


def parse_action(name: str) -> Action:
    key = name.strip()
    if key in ACTION_ALIASES:
        return ACTION_ALIASES[key]
    try:
        return Action(key)
    except ValueError:
        raise UnknownActionError(f"unknown action {name!r}") from None


class Attribute(Enum):
    PLACEMENT = "placement"
    SCOPE = "scope"
    TIME = "time"
    JURISDICTION = "jurisdiction"
    PHYSICAL_VISIBILITY = "physical_visibility"
    EXEC_ENV_ACCESS = "exec_env_access"
    MODIFICATION_TYPE = "modification_type"
    CONCURRENCY = "concurrency"
    DELEGATION = "delegation"


# Attributes the reference monitor checks against NIB state; the rest are
# carried in masks and reported but not enforced.
ENFORCED_ATTRIBUTES = frozenset({Attribute.JURISDICTION, Attribute.PLACEMENT, Attribute.MODIFICATION_TYPE})


def parse_attribute(name: str) -> Attribute:
    key = name.strip().lower().replace("-", "_").replace(" ", "_")
    try:
        return Attribute(key)
    except ValueError:
        raise PolicyError(f"unknown resource attribute {name!r}") from None


class Comparator(Enum):
    EQUALS = "equals"
    ONE_OF = "one_of"


_WS = re.compile(r"\s+")


def normalize_resource_id(raw: str) -> str:
    """``" dataplane topology "`` and ``"dataplane-topology"`` name the same resource."""
    name = _WS.sub("-", raw.strip())
    if not name:
        raise PolicyError("resource identifier must be non-empty")
    return name


@dataclass(frozen=True)
class AttributeConstraint:
    attribute: Attribute
    comparator: Comparator
    values: tuple[str, ...]

    def __post_init__(self) -> None:
        values = tuple(v.strip() for v in self.values)
        if not values or any(not v for v in values):
            raise PolicyError(f"constraint on {self.attribute.value} needs non-empty values")
        if self.comparator is Comparator.EQUALS and len(values) != 1:
            raise PolicyError("an equals constraint takes exactly one value")
        if self.comparator is Comparator.ONE_OF:
            values = tuple(sorted(set(values)))
        object.__setattr__(self, "values", values)

    @classmethod
    def equals(cls, attribute: Attribute | str, value: str) -> "AttributeConstraint":
        attr = attribute if isinstance(attribute, Attribute) else parse_attribute(attribute)
        return cls(attr, Comparator.EQUALS, (value,))

    @classmethod
    def one_of(cls, attribute: Attribute | str, values: Iterable[str]) -> "AttributeConstraint":
        attr = attribute if isinstance(attribute, Attribute) else parse_attribute(attribute)
        return cls(attr, Comparator.ONE_OF, tuple(values))

    @property
    def allowed(self) -> frozenset[str]:
        return frozenset(self.values)

    def admits(self, value: str | None) -> bool:
        return value is not None and value in self.values

    def canonical_fields(self) -> tuple:
        return (self.attribute, self.comparator, self.values)


@dataclass(frozen=True)
class ResourceAccessRule:
    """An operator constraint on one resource.

    ``actions`` is the operator's action restriction; ``None`` means the rule
    does not restrict actions at all.
    """

    resource: str
    constraints: tuple[AttributeConstraint, ...] = ()
    rule_id: str = ""
    actions: frozenset[Action] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "resource", normalize_resource_id(self.resource))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        seen = set()
        for c in self.constraints:
            if c.attribute in seen:
                raise PolicyError(f"rule {self.rule_id!r} constrains {c.attribute.value} twice")
            seen.add(c.attribute)
        if self.actions is not None:
            object.__setattr__(self, "actions", frozenset(self.actions))
        if not self.rule_id:
            object.__setattr__(self, "rule_id", self._default_id())

    def _default_id(self) -> str:
        parts = [f"{c.attribute.value}={'|'.join(c.values)}" for c in self.constraints]
        return f"{self.resource}[{','.join(parts)}]"

    def constraint_for(self, attribute: Attribute) -> AttributeConstraint | None:
        for c in self.constraints:
            if c.attribute is attribute:
                return c
        return None

    def canonical_fields(self) -> tuple:
        restriction = ("*",) if self.actions is None else ("=", self.actions)
        return (self.rule_id, self.resource, self.constraints, restriction)


@dataclass(frozen=True)
class ManifestEntry:
    resource: str
    actions: frozenset[Action]

    def __post_init__(self) -> None:
        object.__setattr__(self, "resource", normalize_resource_id(self.resource))
        object.__setattr__(self, "actions", frozenset(self.actions))
        if not self.actions:
            raise PolicyError(f"manifest entry {self.resource!r} declares no actions")


@dataclass(frozen=True)
class DeploymentManifest:
    app_id: str
    entries: tuple[ManifestEntry, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))
        seen: set[str] = set()
        for e in self.entries:
            if e.resource in seen:
                raise DuplicateResourceError(f"resource {e.resource!r} declared twice")
            seen.add(e.resource)

    @property
    def resources(self) -> tuple[str, ...]:
        return tuple(e.resource for e in self.entries)

    def entry(self, resource: str) -> ManifestEntry | None:
        for e in self.entries:
            if e.resource == resource:
                return e
        return None


class AccessModelVariant(Enum):
    DIRECT_EXPLICIT = "direct_explicit"
    EXCLUSIVE_LONGTERM = "exclusive_longterm"
    EXCLUSIVE_DYNAMIC = "exclusive_dynamic"
    SHARED_PRIORITY = "shared_priority"
    SHARED_NEGOTIATED = "shared_negotiated"
    COMMONS_UNCONTROLLED = "commons_uncontrolled"
    COMMONS_MANAGED = "commons_managed"
    COMMONS_PRIVATE = "commons_private"


DELEGABLE_VARIANTS = frozenset({AccessModelVariant.EXCLUSIVE_DYNAMIC, AccessModelVariant.COMMONS_PRIVATE})
EXCLUSIVE_VARIANTS = frozenset(
    {
        AccessModelVariant.DIRECT_EXPLICIT,
        AccessModelVariant.EXCLUSIVE_LONGTERM,
        AccessModelVariant.EXCLUSIVE_DYNAMIC,
        AccessModelVariant.COMMONS_PRIVATE,
    }
)
# Variants whose arbitration needs a peer negotiation protocol we do not model.
NEGOTIATED_VARIANTS = frozenset({AccessModelVariant.SHARED_NEGOTIATED, AccessModelVariant.COMMONS_MANAGED})


@dataclass(frozen=True)
class AccessModel:
    variant: AccessModelVariant
    priority: int = 0
    delegable: bool | None = None

    def __post_init__(self) -> None:
        if isinstance(self.variant, str):
            object.__setattr__(self, "variant", AccessModelVariant(self.variant))
        if self.delegable is None:
            object.__setattr__(self, "delegable", self.variant in DELEGABLE_VARIANTS)
        elif self.delegable and self.variant not in DELEGABLE_VARIANTS:
            raise PolicyError(f"{self.variant.value} access cannot be delegable")
        if self.priority < 0:
            raise PolicyError("priority must be non-negative")

    @property
    def exclusive(self) -> bool:
        return self.variant in EXCLUSIVE_VARIANTS

    def canonical_fields(self) -> tuple:
        return (self.variant, self.priority, int(bool(self.delegable)))


@dataclass(frozen=True)
class MaskTuple:
    resource: str
    actions: frozenset[Action]
    rules: tuple[ResourceAccessRule, ...] = ()

    @staticmethod
    def canonical_sort_key(t: "MaskTuple") -> str:
        return t.resource

    def canonical_fields(self) -> tuple:
        return (self.resource, self.actions, self.rules)

    def constraints(self, attribute: Attribute) -> list[AttributeConstraint]:
        return [c for r in self.rules if (c := r.constraint_for(attribute)) is not None]

    def allowed_values(self, attribute: Attribute) -> frozenset[str] | None:
        """Values of ``attribute`` every rule on this tuple admits, or ``None``
        when no rule constrains it (rules on one tuple are conjunctive)."""
        allowed: frozenset[str] | None = None
        for c in self.constraints(attribute):
            allowed = c.allowed if allowed is None else allowed & c.allowed
        return allowed


def _mask_digest(app_id: str, model: AccessModel, parent: str | None, tuples: tuple[MaskTuple, ...]) -> bytes:
    return digest(canonical_encode("naca-access-mask/1", app_id, model, parent or "", tuples))


@dataclass(frozen=True)
class AccessMask:
    app_id: str
    tuples: tuple[MaskTuple, ...]
    model: AccessModel
    parent: str | None = None
    mask_digest: bytes = field(init=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "tuples", tuple(self.tuples))
        object.__setattr__(self, "mask_digest", _mask_digest(self.app_id, self.model, self.parent, self.tuples))

    def recompute_digest(self) -> bytes:
        return _mask_digest(self.app_id, self.model, self.parent, self.tuples)

    def verify_digest(self) -> bool:
        return self.recompute_digest() == self.mask_digest

    @property
    def resources(self) -> tuple[str, ...]:
        return tuple(t.resource for t in self.tuples)

    def tuple_for(self, resource: str) -> MaskTuple | None:
        for t in self.tuples:
            if t.resource == resource:
                return t
        return None


@dataclass(frozen=True)
class OperatorPolicySet:
    """Operator rules relevant to one manifest, in operator-declared order."""

    rules: tuple[ResourceAccessRule, ...] = ()

    def for_resource(self, resource: str) -> tuple[ResourceAccessRule, ...]:
        return tuple(r for r in self.rules if r.resource == resource)

    def by_resource(self) -> dict[str, tuple[ResourceAccessRule, ...]]:
        out: dict[str, list[ResourceAccessRule]] = {}
        for r in self.rules:
            out.setdefault(r.resource, []).append(r)
        return {k: tuple(v) for k, v in out.items()}

    def __len__(self) -> int:
        return len(self.rules)


@dataclass(frozen=True)
class Conflict:
    app_a: str
    app_b: str
    resource: str
    reason: str
    rule_ids: tuple[str, ...] = ()
    attributes: tuple[tuple[str, tuple[str, ...]], ...] = ()


@dataclass(frozen=True)
class ConflictReport:
    pairs: tuple[Conflict, ...] = ()

    def __bool__(self) -> bool:
        return bool(self.pairs)

    def involved(self) -> set[tuple[str, str, str]]:
        return {(c.app_a, c.app_b, c.resource) for c in self.pairs}
