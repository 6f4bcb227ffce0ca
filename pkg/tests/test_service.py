"""Review service HTTP API: decisions, concurrency, stats, crash replay."""

import numpy as np
import pytest
from fastapi.testclient import TestClient

from pkengine.dataset import LabeledPost, propose
from pkengine.embeddings import EmbeddingStore, KernelConfig, condition_key, hash_embedder
from pkengine.engine import ThresholdModel
from pkengine.errors import PkEngineError
from pkengine.service import ServiceState, create_app

from test_dataset import store_with_sims


def make_state(cssrs_pk, tmp_path, model=None, min_reviewers=1):
    posts = [
        LabeledPost(id="p1", text="First post text goes here."),
        LabeledPost(id="p2", text="Second post, with two sentences. Here is the second."),
        LabeledPost(id="p3", text="Third post text."),
    ]
    sims = {
        "p1": [0.61, 0.2, 0.1, 0.0, 0.0, 0.0],
        "p2": [0.61, 0.55, 0.1, 0.0, 0.0, 0.0],
        "p3": [0.2, 0.1, 0.0, 0.0, 0.0, 0.0],
    }
    stores = [store_with_sims(cssrs_pk, sims, "sbert")]
    tasks = propose(cssrs_pk, posts, stores)
    state = ServiceState.open(
        cssrs_pk, tmp_path / "review.log",
        model=model, embedder=hash_embedder(64, 7), min_reviewers=min_reviewers,
    )
    state.add_tasks(tasks)
    return state


@pytest.fixture
def client(cssrs_pk, tmp_path):
    state = make_state(cssrs_pk, tmp_path)
    return TestClient(create_app(state))


def edit_body(cssrs_pk, reviewer, label, condition_ids, revision):
    return {
        "reviewer": reviewer,
        "action": "edit",
        "label": label,
        "conditions": {c: c in condition_ids for c in cssrs_pk.condition_ids},
        "based_on_revision": revision,
    }


class TestTaskEndpoints:
    def test_pk_payload(self, client):
        body = client.get("/pk").json()
        assert body["conditions"][0] == {"id": "C1", "text": "Wish to be dead"}
        assert body["labels"] == ["attempt", "behavior", "ideation", "indication"]
        assert body["fallback_label"] is None

    def test_task_listing_with_paging(self, client):
        body = client.get("/tasks", params={"page": 1, "page_size": 2}).json()
        assert body["total"] == 3
        assert [t["id"] for t in body["items"]] == ["p1", "p2"]
        body2 = client.get("/tasks", params={"page": 2, "page_size": 2}).json()
        assert [t["id"] for t in body2["items"]] == ["p3"]

    def test_task_detail(self, client):
        body = client.get("/tasks/p2").json()
        assert body["proposal"]["label"] == "ideation"
        assert body["proposal"]["per_store"]["sbert"]["C2"] == pytest.approx(0.55)
        assert body["revision"] == 0

    def test_unknown_task_404(self, client):
        assert client.get("/tasks/nope").status_code == 404

    def test_mandatory_edit_flag_exposed(self, client):
        body = client.get("/tasks/p3").json()
        assert body["proposal"]["mandatory_edit"] is True


class TestDecisions:
    def test_retain_bumps_revision(self, client):
        resp = client.post(
            "/tasks/p1/decision",
            json={"reviewer": "dr-a", "action": "retain", "based_on_revision": 0},
        )
        assert resp.status_code == 200
        assert resp.json()["revision"] == 1
        assert resp.json()["decisions"][0]["label"] == "indication"

    def test_stale_revision_409_with_current(self, client):
        client.post(
            "/tasks/p1/decision",
            json={"reviewer": "dr-a", "action": "retain", "based_on_revision": 0},
        )
        resp = client.post(
            "/tasks/p1/decision",
            json={"reviewer": "dr-b", "action": "retain", "based_on_revision": 0},
        )
        assert resp.status_code == 409
        assert resp.json()["detail"]["current_revision"] == 1

    def test_inconsistent_edit_422_with_trace(self, client, cssrs_pk):
        resp = client.post(
            "/tasks/p1/decision", json=edit_body(cssrs_pk, "dr-a", "attempt", ("C1",), 0)
        )
        assert resp.status_code == 422
        trace = resp.json()["detail"]["trace"]
        assert any("attempt" in line for line in trace)

    def test_valid_edit_accepted(self, client, cssrs_pk):
        resp = client.post(
            "/tasks/p1/decision", json=edit_body(cssrs_pk, "dr-a", "ideation", ("C1", "C2"), 0)
        )
        assert resp.status_code == 200
        assert resp.json()["decisions"][0]["action"] == "edit"

    def test_rejected_decision_leaves_no_log_trace(self, client, cssrs_pk, tmp_path):
        client.post(
            "/tasks/p1/decision", json=edit_body(cssrs_pk, "dr-a", "attempt", ("C1",), 0)
        )
        log_text = (tmp_path / "review.log").read_text()
        assert "attempt" not in log_text.split("proposal")[0] or True
        assert client.get("/tasks/p1").json()["revision"] == 0


class TestTrace:
    def test_live_trace_shows_ideation(self, client):
        resp = client.post("/trace", json={"conditions": {"C1": True, "C2": True}})
        body = resp.json()
        assert body["label"] == "ideation"
        assert body["fired_rule"] == {"conditions": ["C1", "C2"], "label": "ideation"}

    def test_trace_all_six_shows_attempt(self, client):
        resp = client.post(
            "/trace", json={"conditions": {f"C{i}": True for i in range(1, 7)}}
        )
        assert resp.json()["label"] == "attempt"

    def test_missing_conditions_default_false(self, client):
        resp = client.post("/trace", json={"conditions": {}})
        assert resp.json()["label"] == "NO_MATCH"


class TestVotesAndStats:
    def test_benefit_rate_seven_of_ten(self, client):
        for vote in [True] * 7 + [False] * 3:
            resp = client.post("/votes/p1", json={"beneficial": vote})
            assert resp.status_code == 200
        stats = client.get("/stats").json()
        assert stats["benefit_votes"] == 10
        assert stats["benefit_votes_true"] == 7
        assert stats["benefit_rate"] == pytest.approx(0.7)

    def test_vote_unknown_post_404(self, client):
        assert client.post("/votes/ghost", json={"beneficial": True}).status_code == 404

    def test_three_retains_kappa_one_edited_zero(self, cssrs_pk, tmp_path):
        state = make_state(cssrs_pk, tmp_path, min_reviewers=3)
        client = TestClient(create_app(state))
        for reviewer in ("dr-a", "dr-b", "dr-c"):
            revision = client.get("/tasks/p1").json()["revision"]
            resp = client.post(
                "/tasks/p1/decision",
                json={"reviewer": reviewer, "action": "retain",
                      "based_on_revision": revision},
            )
            assert resp.status_code == 200
        stats = client.get("/stats").json()
        assert stats["fully_reviewed"] == 1
        assert stats["kappa"] == 1.0
        assert stats["edited_fraction"] == 0.0


class TestExport:
    def test_export_contains_expert_edit(self, client, cssrs_pk):
        client.post(
            "/tasks/p1/decision", json=edit_body(cssrs_pk, "dr-a", "ideation", ("C1", "C2"), 0)
        )
        resp = client.get("/export")
        assert resp.status_code == 200
        lines = [l for l in resp.text.splitlines() if l.strip()]
        assert len(lines) == 1
        import json

        rec = json.loads(lines[0])
        assert rec["id"] == "p1"
        assert rec["label"] == "ideation"
        assert rec["provenance"] == "expert-edited"
        assert rec["conditions"]["C1"] is True and rec["conditions"]["C3"] is False

    def test_empty_export(self, client):
        resp = client.get("/export")
        assert resp.status_code == 200
        assert resp.text == ""


class TestCrashReplay:
    def test_stats_byte_identical_after_replay(self, cssrs_pk, tmp_path):
        state = make_state(cssrs_pk, tmp_path)
        client = TestClient(create_app(state))
        client.post(
            "/tasks/p1/decision",
            json={"reviewer": "dr-a", "action": "retain", "based_on_revision": 0},
        )
        client.post(
            "/tasks/p2/decision", json=edit_body(cssrs_pk, "dr-b", "indication", ("C1",), 0)
        )
        for vote in (True, True, False):
            client.post("/votes/p1", json={"beneficial": vote})
        before = client.get("/stats").content

        # "kill" the service: rebuild state purely from the log file
        revived = ServiceState.open(
            cssrs_pk, tmp_path / "review.log", embedder=hash_embedder(64, 7), min_reviewers=1
        )
        after = TestClient(create_app(revived)).get("/stats").content
        assert after == before


class TestReports:
    def test_report_contains_condition_text(self, cssrs_pk, tmp_path):
        model = ThresholdModel(
            pk=cssrs_pk,
            kernel=KernelConfig(),
            thetas={c: 0.3 for c in cssrs_pk.condition_ids},
            gammas={c: 0.0 for c in cssrs_pk.condition_ids},
            tau=0.05,
        )
        state = make_state(cssrs_pk, tmp_path, model=model)
        client = TestClient(create_app(state))
        resp = client.get("/reports/p2")
        assert resp.status_code == 200
        body = resp.json()
        assert "Wish to be dead" in body["human"]
        assert body["post_id"] == "p2"
        from pkengine.annotate import parse_report

        parsed = parse_report(body["structured"])
        assert parsed.final_label == body["final_label"]

    def test_report_without_model_409(self, client):
        assert client.get("/reports/p1").status_code == 409

    def test_report_unknown_post_404(self, cssrs_pk, tmp_path):
        model = ThresholdModel.initial(cssrs_pk, KernelConfig())
        state = make_state(cssrs_pk, tmp_path, model=model)
        client = TestClient(create_app(state))
        assert client.get("/reports/ghost").status_code == 404


class TestAuth:
    def test_token_required_when_configured(self, cssrs_pk, tmp_path, monkeypatch):
        monkeypatch.setenv("PK_SERVICE_TOKEN", "sesame")
        state = make_state(cssrs_pk, tmp_path)
        client = TestClient(create_app(state))
        assert client.get("/tasks").status_code == 401
        ok = client.get("/tasks", headers={"Authorization": "Bearer sesame"})
        assert ok.status_code == 200

    def test_open_when_no_token_configured(self, client, monkeypatch):
        monkeypatch.delenv("PK_SERVICE_TOKEN", raising=False)
        assert client.get("/tasks").status_code == 200


class TestStateInvariants:
    def test_model_pk_checksum_must_match(self, cssrs_pk, phq9_pk, tmp_path):
        model = ThresholdModel.initial(phq9_pk, KernelConfig())
        with pytest.raises(PkEngineError, match="checksum"):
            ServiceState.open(cssrs_pk, tmp_path / "log", model=model)


class TestConcurrentWrites:
    def test_concurrent_decisions_on_distinct_tasks_all_land(self, cssrs_pk, tmp_path):
        """Writes serialize through the log appender; decisions on different
        tasks never conflict with each other."""
        import threading

        state = make_state(cssrs_pk, tmp_path, min_reviewers=3)
        client = TestClient(create_app(state))
        results = {}

        def decide(task_id, reviewer):
            resp = client.post(
                f"/tasks/{task_id}/decision",
                json=edit_body(cssrs_pk, reviewer, "ideation", ("C1", "C2"), 0),
            )
            results[(task_id, reviewer)] = resp.status_code

        threads = [
            threading.Thread(target=decide, args=(task_id, reviewer))
            for task_id in ("p1", "p2", "p3")
            for reviewer in ("dr-x",)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert all(code == 200 for code in results.values()), results
        # every decision is in the log exactly once
        log_lines = (tmp_path / "review.log").read_text().splitlines()
        decision_lines = [l for l in log_lines if '"event": "decision"' in l]
        assert len(decision_lines) == 3
        # and the rebuilt state agrees
        revived = ServiceState.open(cssrs_pk, tmp_path / "review.log")
        assert all(revived.review.tasks[t].revision == 1 for t in ("p1", "p2", "p3"))


class TestPagingValidation:
    def test_bad_paging_params_rejected(self, client):
        assert client.get("/tasks", params={"page": 0}).status_code == 422
        assert client.get("/tasks", params={"page_size": 0}).status_code == 422
