from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from naca.audit import AuditLog
from naca.authcode import MacKey
from naca.controller.intents import Intent, IntentKind
from naca.policy.model import AccessMask, AccessModel, Action, MaskTuple
from naca.tagger import (
    AppRequest,
    RequestDropped,
    RequestTagger,
    TaggerError,
    TagRecord,
    TagRecordFormatError,
    compute_tag,
)

KEY = MacKey("K", bytes([7]) * 32)


def _mask(app: str, *resources: str) -> AccessMask:
    return AccessMask(app, tuple(MaskTuple(r, frozenset({Action.READ})) for r in resources), AccessModel("commons_uncontrolled"))


@pytest.fixture
def tagger():
    t = RequestTagger(KEY, AuditLog())
    for app in ("a", "b"):
        t.register_credential(app, f"secret-{app}")
        t.register_mask(_mask(app, "dataplane-topology", "stats"))
    return t


TOPO = Intent.make(IntentKind.TOPOLOGY_READ)


class TestTagging:
    def test_tag_binds_fields(self, tagger):
        record, fwd = tagger.tag_request(AppRequest("a", "secret-a", TOPO))
        mask = tagger.mask_for("a")
        assert (record.app_id, record.request_id, record.counter) == ("a", "a/1", 1)
        assert record.mask_digest == mask.mask_digest
        assert record.mac == compute_tag(KEY, "a", "a/1", mask.mask_digest, 1)
        assert fwd.mask is mask and fwd.intent == TOPO

    def test_counter_is_global_and_names_request_ids(self, tagger):
        ids = [tagger.tag_request(AppRequest(app, f"secret-{app}", TOPO))[0] for app in "abab"]
        assert [(r.request_id, r.counter) for r in ids] == [("a/1", 1), ("b/2", 2), ("a/3", 3), ("b/4", 4)]

    @pytest.mark.parametrize(
        "request_kwargs, reason",
        [
            ({"app_id": "a", "credential": "wrong"}, "authentication failed"),
            ({"app_id": "ghost", "credential": ""}, "authentication failed"),
            ({"app_id": "a", "credential": "secret-a", "requested_resources": {"flow"}}, "resources outside manifest"),
        ],
    )
    def test_drops_consume_no_counter(self, tagger, request_kwargs, reason):
        kwargs = {"intent": TOPO, **request_kwargs}
        with pytest.raises(RequestDropped) as err:
            tagger.tag_request(AppRequest(**kwargs))
        assert err.value.reason.startswith(reason)
        assert tagger.counter == 0
        record, _ = tagger.tag_request(AppRequest("a", "secret-a", TOPO))
        assert record.counter == 1

    def test_intent_needing_undeclared_resource(self, tagger):
        intent = Intent.make(IntentKind.STATS_READ, node="s1")
        with pytest.raises(RequestDropped, match="undeclared"):
            tagger.tag_request(AppRequest("a", "secret-a", intent, {"dataplane-topology"}))

    def test_blocked_and_revoked(self, tagger):
        tagger.block("a", "quarantined")
        with pytest.raises(RequestDropped, match="quarantined"):
            tagger.tag_request(AppRequest("a", "secret-a", TOPO))
        tagger.revoke("b")
        with pytest.raises(RequestDropped):
            tagger.tag_request(AppRequest("b", "secret-b", TOPO))
        assert tagger.counter == 0

    def test_masks_are_immutable(self, tagger):
        with pytest.raises(TaggerError):
            tagger.register_mask(_mask("a", "flow"))

    def test_records_reach_monitor_sink(self, tagger):
        seen = []
        tagger.connect_monitor(seen.append)
        record, _ = tagger.tag_request(AppRequest("a", "secret-a", TOPO))
        assert seen == [record]

    def test_unkeyed_tagger_refuses(self):
        t = RequestTagger()
        t.register_credential("a", "s")
        t.register_mask(_mask("a", "dataplane-topology"))
        with pytest.raises(TaggerError):
            t.tag_request(AppRequest("a", "s", TOPO))


class TestTagRecordWire:
    @given(st.text(min_size=1, max_size=20), st.text(min_size=1, max_size=20), st.binary(min_size=32, max_size=32),
           st.integers(0, 2**64 - 1), st.binary(min_size=32, max_size=32))
    def test_round_trip(self, app, req, dig, counter, mac):
        rec = TagRecord(app, req, dig, counter, mac)
        assert TagRecord.from_bytes(rec.to_bytes()) == rec

    def test_truncation_detected(self):
        raw = TagRecord("a", "a/1", bytes(32), 1, bytes(32)).to_bytes()
        for cut in (0, 3, len(raw) - 1):
            with pytest.raises(TagRecordFormatError):
                TagRecord.from_bytes(raw[:cut])
