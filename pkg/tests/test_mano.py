from __future__ import annotations

import pytest

from naca.controller.intents import Intent
from naca.mano import AppStatus, CatalogueViolation, EnrollmentError, EnrollmentRejected
from naca.monitor import Decision
from naca.pipeline import Pipeline
from naca.policy.access_models import Admission, DelegationError, UnknownApplication
from naca.policy.model import AccessModel, Action, Attribute, DeploymentManifest, ManifestEntry

TOPO = Intent.make("topology_read")


def _dm(app: str, *entries: tuple[str, set[Action]]) -> DeploymentManifest:
    return DeploymentManifest(app, tuple(ManifestEntry(r, frozenset(a)) for r, a in entries))


TOPO_DM = (("dataplane-topology", {Action.READ}),)
STATS_DM = (("stats", {Action.STAT}),)


@pytest.fixture
def p() -> Pipeline:
    return Pipeline("mesh5", seed=5)


class TestEnrollment:
    def test_enroll_registers_everywhere(self, p):
        rec = p.enroll("a", _dm("a", *TOPO_DM), AccessModel("commons_uncontrolled"))
        assert rec.status is AppStatus.INSTALLED
        assert p.tagger.mask_for("a") is rec.mask
        assert p.mano.masks == {"a": rec.mask}
        assert p.credential("a")
        assert p.audit.select("mano", "enrolled")[-1]["mask_digest"] == rec.mask.mask_digest

    def test_xml_manifest_and_rules(self, p):
        from naca.harness.scenario import POLICY_DIR

        rec = p.enroll(
            "a", (POLICY_DIR / "topology_manifest.xml").read_text(), AccessModel("commons_uncontrolled"),
            (POLICY_DIR / "region_a_rule.xml").read_text(),
        )
        (tup,) = rec.mask.tuples
        assert tup.resource == "dataplane-topology"
        assert tup.allowed_values(Attribute.JURISDICTION) == frozenset({"region-A"})

    def test_catalogue_violation(self, p):
        with pytest.raises(CatalogueViolation) as err:
            p.enroll("a", _dm("a", ("coffee-machine", {Action.READ})), AccessModel("commons_uncontrolled"))
        assert err.value.missing == ["coffee-machine"]
        assert "a" not in p.mano.apps and p.mano.credentials == {}

    def test_conflict_rejects_whole_enrollment(self, p):
        p.enroll("a", _dm("a", *TOPO_DM), AccessModel("exclusive_longterm"))
        with pytest.raises(EnrollmentRejected) as err:
            p.enroll("b", _dm("b", *TOPO_DM, *STATS_DM), AccessModel("commons_uncontrolled"))
        assert [(c.app_b, c.resource) for c in err.value.report.pairs] == [("a", "dataplane-topology")]
        assert "b" not in p.mano.apps
        assert p.request("b", TOPO, credential="") is None

    def test_shared_priority_needs_distinct_priorities(self, p):
        p.enroll("a", _dm("a", *TOPO_DM), AccessModel("shared_priority", priority=1))
        with pytest.raises(EnrollmentRejected):
            p.enroll("b", _dm("b", *TOPO_DM), AccessModel("shared_priority", priority=1))
        p.enroll("c", _dm("c", *TOPO_DM), AccessModel("shared_priority", priority=2))

    def test_double_enrollment(self, p):
        p.enroll("a", _dm("a", *TOPO_DM), AccessModel("commons_uncontrolled"))
        with pytest.raises(EnrollmentError):
            p.enroll("a", _dm("a", *TOPO_DM), AccessModel("commons_uncontrolled"))


class TestDelegationAndTermination:
    def setup_tree(self, p: Pipeline) -> None:
        p.enroll("A", _dm("A", *TOPO_DM, *STATS_DM), AccessModel("commons_private"))
        p.delegate("A", "B", [0])
        p.delegate("A", "C", [1])
        p.delegate("B", "D", [0])

    def test_delegated_mask_is_a_subset(self, p):
        self.setup_tree(p)
        assert p.mano.apps["C"].mask.resources == ("stats",)
        assert p.mano.apps["D"].parent == "B"
        assert p.mano.apps["A"].children == ["B", "C"]

    def test_terminate_revokes_closure(self, p):
        self.setup_tree(p)
        b_before = p.request("B", TOPO)
        assert p.verdict_for(b_before) is Decision.ACCEPT
        assert p.terminate("A") == ["B", "C", "D"]
        assert all(p.mano.apps[x].status is AppStatus.TERMINATED for x in "ABCD")
        accepted = len(p.nib.log)
        for app in "ABCD":
            assert p.request(app, TOPO) is None
        assert len(p.nib.log) == accepted
        assert p.mano.masks == {}

    def test_terminate_leaf_keeps_parent(self, p):
        self.setup_tree(p)
        assert p.terminate("B") == ["D"]
        assert p.verdict_for(p.request("A", TOPO)) is Decision.ACCEPT

    def test_delegation_errors(self, p):
        p.enroll("u", _dm("u", *TOPO_DM), AccessModel("commons_uncontrolled"))
        with pytest.raises(DelegationError):
            p.delegate("u", "v", [0])
        with pytest.raises(UnknownApplication):
            p.delegate("ghost", "v", [0])
        with pytest.raises(UnknownApplication):
            p.terminate("ghost")

    def test_delegation_to_enrolled_app_refused(self, p):
        self.setup_tree(p)
        p.enroll("E", _dm("E", ("device-config", {Action.CONFIG_READ})), AccessModel("commons_uncontrolled"))
        with pytest.raises(DelegationError):
            p.delegate("A", "E", [0])


class TestMitigationAndAdmission:
    def test_quarantine_blocks_tagger(self, p):
        p.enroll("a", _dm("a", *TOPO_DM), AccessModel("commons_uncontrolled"))
        assert p.mano.quarantine("a") == "quarantine"
        assert p.mano.apps["a"].status is AppStatus.QUARANTINED
        assert p.mano.quarantine("a") == "none"
        assert p.request("a", TOPO) is None
        assert "a" in p.mano.masks

    def test_log_policy(self):
        p = Pipeline("mesh5", seed=1, mitigation="log")
        p.enroll("a", _dm("a", *TOPO_DM), AccessModel("commons_uncontrolled"))
        entry = p.mano.handle_mitigation({"app_id": "a", "verdict": "reject_mac"})
        assert entry == {"app_id": "a", "verdict": "reject_mac", "action": "logged"}
        assert p.mano.apps["a"].status is AppStatus.INSTALLED

    def test_callable_and_unknown_policy(self, p):
        p.mano._mitigation = lambda mano, ev: "paged-operator"
        assert p.mano.handle_mitigation({"app_id": "a", "verdict": "reject_mac"})["action"] == "paged-operator"
        p.mano._mitigation = "reboot"
        with pytest.raises(ValueError):
            p.mano.handle_mitigation({"app_id": "a", "verdict": "reject_mac"})

    def test_admission(self, p):
        p.enroll("a", _dm("a", *TOPO_DM), AccessModel("shared_priority", priority=1))
        p.enroll("b", _dm("b", *TOPO_DM), AccessModel("shared_priority", priority=2))
        p.enroll("c", _dm("c", *STATS_DM), AccessModel("commons_uncontrolled"))
        assert p.mano.admit("dataplane-topology", "a") is Admission.GRANT
        assert p.mano.admit("dataplane-topology", "c") is Admission.DENY
        assert p.mano.admit("dataplane-topology", "a", ["b"]) is Admission.DENY
        assert p.mano.admit("dataplane-topology", "b", ["a", "c"]) is Admission.GRANT
        with pytest.raises(UnknownApplication):
            p.mano.admit("stats", "ghost")

    def test_keys_are_seeded(self):
        def first_tag(seed):
            p = Pipeline("mesh5", seed=seed)
            p.enroll("a", _dm("a", *TOPO_DM), AccessModel("commons_uncontrolled"))
            p.request("a", TOPO)
            return p.credential("a"), p.monitor._by_request["a/1"].mac

        assert first_tag(9) == first_tag(9)
        assert first_tag(10) != first_tag(9)
