"""HTTP probe API: paging, blind listings, masking, predictions, sessions
with persistent tallies, and the error envelope."""

from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from clozecheck.core import Claim, VerificationLabel
from clozecheck.dataset import ClaimSet, load_claimset
from clozecheck.masking import RuleNerBackend
from clozecheck.pipeline import make_cloze_backend
from clozecheck.service import create_app, session_tally

FIXTURES = Path(__file__).parent / "fixtures"

S = VerificationLabel.SUPPORTS


def _claimsets():
    probe, _ = load_claimset(FIXTURES / "probe_claims.jsonl", "dev")
    extended = ClaimSet(
        claims=probe.claims
        + (
            Claim(id=6, text="the sky is blue"),
            Claim(id=7, text="???"),
        ),
        split_name="dev",
    )
    extra = ClaimSet(
        claims=(Claim(id=100, text="Lyon is in France.", gold_label=S),),
        split_name="extra",
    )
    return {"dev": extended, "extra": extra}


@pytest.fixture()
def session_dir(tmp_path):
    return tmp_path / "sessions"


@pytest.fixture()
def client(session_dir):
    app = create_app(
        _claimsets(),
        make_cloze_backend(str(FIXTURES / "probe_table.jsonl")),
        session_dir,
        ner=RuleNerBackend(),
    )
    return TestClient(app)


def _assert_error(response, status, code):
    assert response.status_code == status
    payload = response.json()
    assert set(payload.keys()) == {"error"}
    assert set(payload["error"].keys()) == {"code", "message"}
    assert payload["error"]["code"] == code


class TestClaims:
    def test_listing_is_blind_and_paged(self, client):
        payload = client.get("/v1/claims", params={"limit": 3}).json()
        assert payload["split"] == "dev"
        assert payload["total"] == 7
        assert [c["id"] for c in payload["claims"]] == [1, 2, 3]
        for claim in payload["claims"]:
            assert set(claim.keys()) == {"id", "text", "has_gold"}

    def test_offset_window(self, client):
        payload = client.get(
            "/v1/claims", params={"offset": 5, "limit": 5}
        ).json()
        assert [c["id"] for c in payload["claims"]] == [6, 7]
        assert payload["claims"][0]["has_gold"] is False

    def test_offset_past_end_is_empty(self, client):
        payload = client.get("/v1/claims", params={"offset": 50}).json()
        assert payload["claims"] == []
        assert payload["total"] == 7

    def test_bad_paging_rejected(self, client):
        _assert_error(
            client.get("/v1/claims", params={"offset": -1}), 400, "bad_offset"
        )
        _assert_error(
            client.get("/v1/claims", params={"limit": 0}), 400, "bad_limit"
        )
        _assert_error(
            client.get("/v1/claims", params={"limit": 101}), 400, "bad_limit"
        )

    def test_split_selection(self, client):
        payload = client.get("/v1/claims", params={"split": "extra"}).json()
        assert payload["total"] == 1
        assert payload["claims"][0]["id"] == 100
        _assert_error(
            client.get("/v1/claims", params={"split": "nope"}),
            404,
            "unknown_split",
        )

    def test_detail_includes_surface_tokens(self, client):
        payload = client.get("/v1/claims/4").json()
        assert payload["id"] == 4
        assert payload["text"] == "Chile is a country."
        assert payload["has_gold"] is True
        assert [t["text"] for t in payload["tokens"]] == [
            "Chile",
            "is",
            "a",
            "country",
            ".",
        ]
        first = payload["tokens"][0]
        assert payload["text"][first["start"] : first["end"]] == "Chile"

    def test_detail_finds_claims_across_splits(self, client):
        assert client.get("/v1/claims/100").json()["id"] == 100

    def test_unknown_claim(self, client):
        _assert_error(client.get("/v1/claims/999"), 404, "claim_not_found")

    def test_non_integer_claim_id(self, client):
        _assert_error(client.get("/v1/claims/abc"), 422, "validation_error")


class TestMask:
    def test_last_token(self, client):
        payload = client.post(
            "/v1/mask", json={"claim_id": 1, "strategy": "last_token"}
        ).json()
        assert payload == {
            "claim_id": 1,
            "masked_text": "Kuching is the capital of [MASK].",
            "gold_token": "Sarawak",
            "mask_char_span": [26, 33],
            "strategy": "last_token",
            "fallback_used": False,
        }

    def test_last_entity_uses_recognizer(self, client):
        payload = client.post(
            "/v1/mask", json={"claim_id": 2, "strategy": "last_entity"}
        ).json()
        assert payload["masked_text"] == "The Beach's director was Danny [MASK]."
        assert payload["gold_token"] == "Boyle"
        assert payload["fallback_used"] is False

    def test_last_entity_falls_back_without_entities(self, client):
        payload = client.post(
            "/v1/mask", json={"claim_id": 6, "strategy": "last_entity"}
        ).json()
        assert payload["masked_text"] == "the sky is [MASK]"
        assert payload["strategy"] == "last_token"
        assert payload["fallback_used"] is True

    def test_manual(self, client):
        payload = client.post(
            "/v1/mask",
            json={"claim_id": 4, "strategy": "manual", "token_index": 0},
        ).json()
        assert payload["masked_text"] == "[MASK] is a country."
        assert payload["gold_token"] == "Chile"

    def test_manual_requires_index(self, client):
        _assert_error(
            client.post("/v1/mask", json={"claim_id": 4, "strategy": "manual"}),
            400,
            "missing_token_index",
        )

    def test_bad_strategy(self, client):
        _assert_error(
            client.post("/v1/mask", json={"claim_id": 4, "strategy": "middle"}),
            400,
            "bad_strategy",
        )

    def test_punctuation_only_claim_unmaskable(self, client):
        _assert_error(
            client.post("/v1/mask", json={"claim_id": 7, "strategy": "last_token"}),
            400,
            "unmaskable",
        )

    def test_mask_probe_logged_to_session(self, client):
        session_id = client.post("/v1/sessions").json()["session_id"]
        client.post(
            "/v1/mask",
            json={"claim_id": 1, "strategy": "last_token", "session_id": session_id},
        )
        records = client.get(f"/v1/sessions/{session_id}").json()["records"]
        kinds = [r["type"] for r in records]
        assert kinds == ["created", "probe_mask"]
        assert records[1]["claim_id"] == 1


class TestPredict:
    def test_top1(self, client):
        payload = client.post(
            "/v1/predict",
            json={"masked_text": "Kuching is the capital of [MASK]."},
        ).json()
        assert payload["predictions"] == [
            {"token": "Sarawak", "score": 0.62, "rank": 1}
        ]

    def test_topk(self, client):
        payload = client.post(
            "/v1/predict",
            json={"masked_text": "Tim Roth was born in [MASK]", "k": 2},
        ).json()
        assert [p["token"] for p in payload["predictions"]] == ["London", "1961"]
        assert [p["rank"] for p in payload["predictions"]] == [1, 2]

    def test_unknown_context_yields_no_predictions(self, client):
        payload = client.post(
            "/v1/predict", json={"masked_text": "Totally novel [MASK]."}
        ).json()
        assert payload["predictions"] == []

    def test_k_bounds_validated(self, client):
        _assert_error(
            client.post(
                "/v1/predict", json={"masked_text": "x [MASK].", "k": 0}
            ),
            422,
            "validation_error",
        )

    def test_predict_probe_logged_to_session(self, client):
        session_id = client.post("/v1/sessions").json()["session_id"]
        client.post(
            "/v1/predict",
            json={
                "masked_text": "Seohyun [MASK].",
                "claim_id": 5,
                "session_id": session_id,
            },
        )
        records = client.get(f"/v1/sessions/{session_id}").json()["records"]
        assert records[-1]["type"] == "probe_predict"
        assert records[-1]["shown"] == ["Park"]


class TestSessions:
    def test_create(self, client):
        response = client.post("/v1/sessions")
        assert response.status_code == 201
        session_id = response.json()["session_id"]
        assert len(session_id) == 32
        assert all(c in "0123456789abcdef" for c in session_id)

    def test_unknown_session(self, client):
        _assert_error(
            client.get("/v1/sessions/" + "0" * 32), 404, "session_not_found"
        )
        _assert_error(client.get("/v1/sessions/nope"), 404, "session_not_found")

    def test_probe_protocol_tally(self, client):
        # match rule applied by hand: predicted == gold token only for 1, 2
        session_id = client.post("/v1/sessions").json()["session_id"]
        submissions = [
            (1, "SUPPORTS", True),
            (2, "SUPPORTS", True),
            (3, "REFUTES", False),
            (4, "REFUTES", False),
            (5, "REFUTES", False),
        ]
        for claim_id, verdict, expected_correct in submissions:
            payload = client.post(
                f"/v1/sessions/{session_id}/verdicts",
                json={"claim_id": claim_id, "verdict": verdict},
            ).json()
            assert payload["gold"] == "SUPPORTS"
            assert payload["correct"] is expected_correct
        assert payload["verdict_count"] == 5
        assert payload["gold_labeled_count"] == 5
        assert payload["correct_count"] == 2
        assert payload["accuracy"] == 0.4

    def test_unlabeled_claim_never_moves_tally(self, client):
        session_id = client.post("/v1/sessions").json()["session_id"]
        client.post(
            f"/v1/sessions/{session_id}/verdicts",
            json={"claim_id": 1, "verdict": "SUPPORTS"},
        )
        payload = client.post(
            f"/v1/sessions/{session_id}/verdicts",
            json={"claim_id": 6, "verdict": "REFUTES"},
        ).json()
        assert payload["gold"] is None
        assert payload["correct"] is None
        assert payload["verdict_count"] == 2
        assert payload["gold_labeled_count"] == 1
        assert payload["accuracy"] == 1.0

    def test_bad_verdict_label(self, client):
        session_id = client.post("/v1/sessions").json()["session_id"]
        _assert_error(
            client.post(
                f"/v1/sessions/{session_id}/verdicts",
                json={"claim_id": 1, "verdict": "MAYBE"},
            ),
            400,
            "bad_verdict",
        )

    def test_verdict_for_unknown_claim(self, client):
        session_id = client.post("/v1/sessions").json()["session_id"]
        _assert_error(
            client.post(
                f"/v1/sessions/{session_id}/verdicts",
                json={"claim_id": 999, "verdict": "SUPPORTS"},
            ),
            404,
            "claim_not_found",
        )

    def test_verdict_to_unknown_session(self, client):
        _assert_error(
            client.post(
                "/v1/sessions/" + "0" * 32 + "/verdicts",
                json={"claim_id": 1, "verdict": "SUPPORTS"},
            ),
            404,
            "session_not_found",
        )

    def test_tally_survives_restart(self, session_dir):
        claimsets = _claimsets()
        backend = make_cloze_backend(str(FIXTURES / "probe_table.jsonl"))
        first = TestClient(create_app(claimsets, backend, session_dir))
        session_id = first.post("/v1/sessions").json()["session_id"]
        for claim_id, verdict in [(1, "SUPPORTS"), (2, "REFUTES")]:
            first.post(
                f"/v1/sessions/{session_id}/verdicts",
                json={"claim_id": claim_id, "verdict": verdict},
            )

        second = TestClient(create_app(claimsets, backend, session_dir))
        payload = second.get(f"/v1/sessions/{session_id}").json()
        assert payload["verdict_count"] == 2
        assert payload["correct_count"] == 1
        assert payload["accuracy"] == 0.5


class TestTallyFunction:
    def test_empty_records(self):
        tally = session_tally([{"type": "created"}])
        assert tally == {
            "verdict_count": 0,
            "gold_labeled_count": 0,
            "correct_count": 0,
            "accuracy": 0.0,
        }

    def test_only_verdict_records_counted(self):
        records = [
            {"type": "created"},
            {"type": "probe_mask", "claim_id": 1},
            {"type": "verdict", "gold": "SUPPORTS", "correct": True},
            {"type": "verdict", "gold": None, "correct": None},
            {"type": "verdict", "gold": "REFUTES", "correct": False},
        ]
        tally = session_tally(records)
        assert tally["verdict_count"] == 3
        assert tally["gold_labeled_count"] == 2
        assert tally["correct_count"] == 1
        assert tally["accuracy"] == 0.5


class TestErrorEnvelope:
    def test_unknown_path(self, client):
        _assert_error(client.get("/v1/nothing/here"), 404, "http_error")

    def test_validation_errors_use_envelope(self, client):
        _assert_error(client.post("/v1/mask", json={}), 422, "validation_error")

    def test_empty_claimsets_rejected(self, tmp_path):
        backend = make_cloze_backend(str(FIXTURES / "probe_table.jsonl"))
        with pytest.raises(ValueError):
            create_app({}, backend, tmp_path)


class TestCors:
    def test_any_origin_allowed(self, client):
        # the probe page may be a static file on a different local port
        response = client.get(
            "/v1/claims", headers={"Origin": "http://127.0.0.1:8000"}
        )
        assert response.status_code == 200
        assert response.headers["access-control-allow-origin"] == "*"

    def test_preflight_allows_post(self, client):
        response = client.options(
            "/v1/mask",
            headers={
                "Origin": "http://127.0.0.1:8000",
                "Access-Control-Request-Method": "POST",
                "Access-Control-Request-Headers": "content-type",
            },
        )
        assert response.status_code == 200
        assert response.headers["access-control-allow-origin"] == "*"
        assert "POST" in response.headers["access-control-allow-methods"]
