"""Manifests, operator rules, access masks and the access-model taxonomy."""

from naca.policy.access_models import (
    Admission,
    DelegationError,
    UnknownApplication,
    admit_under_model,
    delegation_children,
    derive_delegated_mask,
    revocation_set,
)
from naca.policy.algebra import (
    MappingKind,
    access_mask_mapping,
    build_operator_policy_set,
    classify_mapping,
    compute_access_mask,
    delegation_root,
    detect_conflicts,
    models_compatible,
    slice_overlap,
    validate_requested_resources,
)
from naca.policy.grammar import (
    manifest_to_json,
    parse_manifest,
    parse_rules,
    rules_to_json,
    serialize_manifest_json,
    serialize_manifest_xml,
)
from naca.policy.model import (
    ENFORCED_ATTRIBUTES,
    AccessMask,
    AccessModel,
    AccessModelVariant,
    Action,
    Attribute,
    AttributeConstraint,
    Comparator,
    Conflict,
    ConflictReport,
    ContractBreach,
    DeploymentManifest,
    DuplicateResourceError,
    ManifestEntry,
    ManifestSyntaxError,
    MaskTuple,
    OperatorPolicySet,
    PolicyError,
    ResourceAccessRule,
    UnknownActionError,
)

__all__ = [name for name in dir() if not name.startswith("_")]
