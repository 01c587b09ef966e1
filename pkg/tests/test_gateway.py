from __future__ import annotations

import json
import random
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from endcloud.api import create_app
from endcloud.errors import (
    BackendError,
    EccError,
    EventLogError,
    IllegalTransitionError,
    UnknownRecordError,
)
from endcloud.gateway import (
    ChatRequest,
    EventLog,
    Gateway,
    Metrics,
    iter_events,
    replay_events,
)
from endcloud.scoring import MappingScorer

from conftest import replay_config


def _gateway(tmp_path, queries, low=(), sim_overrides=None, **overrides):
    """Gateway over replay fixtures with scripted scores.

    Every query q maps to end answer "end:q" and cloud answer "cloud:q".
    sim defaults high (0.9 -> final 0.9); queries in `low` get sim 0.1
    (final 0.26 < tau, escalates). rel is a constant 0.9 both ways.
    """
    end_map = {q: f"end:{q}" for q in queries}
    cloud_map = {q: f"cloud:{q}" for q in queries}
    cfg = replay_config(tmp_path, end_map, cloud_map, **overrides)
    sim = MappingScorer(default=0.9)
    for q in low:
        sim.set(f"end:{q}", f"cloud:{q}", 0.1)
    for pair, value in (sim_overrides or {}).items():
        sim.set(pair[0], pair[1], value)
    rel = MappingScorer(default=0.9)
    return Gateway(cfg, sim_scorer=sim, rel_scorer=rel), cfg


def _kinds(log_path):
    return [e.kind for e in iter_events(log_path)]


def test_accept_path(tmp_path):
    gw, cfg = _gateway(tmp_path, ["how do I return this?"])
    resp = gw.handle_chat(ChatRequest(session_id="s1", message="how do I return this?"))
    assert resp.reply == "end:how do I return this?"
    assert resp.served_by == "end"
    assert resp.breakdown.final == pytest.approx(0.9, abs=1e-12)
    record = gw.get_record(resp.record_id)
    assert record.state == "accepted"
    assert _kinds(cfg.log_path) == ["received", "answered", "evaluated", "accepted", "responded"]


def test_escalate_path_sync_serves_cloud(tmp_path):
    gw, cfg = _gateway(tmp_path, ["where is order 77?"], low=["where is order 77?"])
    resp = gw.handle_chat(ChatRequest(session_id="s1", message="where is order 77?"))
    assert resp.served_by == "cloud"
    assert resp.reply == "cloud:where is order 77?"
    record = gw.get_record(resp.record_id)
    assert record.state == "queued"
    assert _kinds(cfg.log_path) == [
        "received",
        "answered",
        "evaluated",
        "escalated",
        "pseudo_labeled",
        "queued",
        "responded",
    ]
    pending = gw.queue.pending()
    assert len(pending) == 1
    assert pending[0].query == "where is order 77?"
    assert pending[0].output == "cloud:where is order 77?"
    assert pending[0].origin == "cloud_pseudo_label"
    assert pending[0].source_record == resp.record_id


def test_escalate_path_async_serves_end(tmp_path):
    gw, cfg = _gateway(tmp_path, ["q"], low=["q"], escalation_mode="async")
    resp = gw.handle_chat(ChatRequest(session_id="s", message="q"))
    assert resp.served_by == "end"
    assert resp.reply == "end:q"
    assert gw.get_record(resp.record_id).state == "queued"  # training still happens
    assert gw.queue.depth() == 1


def test_record_ids_are_sequential(tmp_path):
    gw, _ = _gateway(tmp_path, ["a", "b", "c"])
    ids = [gw.handle_chat(ChatRequest(session_id="s", message=q)).record_id for q in "abc"]
    assert ids == ["r-000001", "r-000002", "r-000003"]


def test_empty_message_rejected(tmp_path):
    gw, _ = _gateway(tmp_path, ["q"])
    with pytest.raises(EccError):
        gw.handle_chat(ChatRequest(session_id="s", message="  \t\n "))
    assert gw.metrics().queries == 0


def test_sampling_zero_skips_evaluation(tmp_path):
    gw, cfg = _gateway(tmp_path, ["q"], eval_sampling_rate=0.0)
    resp = gw.handle_chat(ChatRequest(session_id="s", message="q"))
    assert resp.breakdown is None
    assert resp.served_by == "end"
    assert gw.get_record(resp.record_id).state == "answered"
    assert _kinds(cfg.log_path) == ["received", "answered", "responded"]


def test_sampling_rate_follows_rng(tmp_path):
    queries = [f"q{i}" for i in range(40)]
    end_map = {q: f"end:{q}" for q in queries}
    cloud_map = {q: f"cloud:{q}" for q in queries}
    cfg = replay_config(tmp_path, end_map, cloud_map, eval_sampling_rate=0.5)
    gw = Gateway(
        cfg,
        sim_scorer=MappingScorer(default=0.9),
        rel_scorer=MappingScorer(default=0.9),
        rng=random.Random(99),
    )
    for q in queries:
        gw.handle_chat(ChatRequest(session_id="s", message=q))
    draws = random.Random(99)
    expected = sum(1 for _ in queries if draws.random() < 0.5)
    evaluated = sum(1 for k in _kinds(cfg.log_path) if k == "evaluated")
    assert evaluated == expected
    assert 0 < evaluated < len(queries)


def test_end_failure_logged_and_raised(tmp_path):
    gw, cfg = _gateway(tmp_path, ["known"])
    with pytest.raises(BackendError):
        gw.handle_chat(ChatRequest(session_id="s", message="not in fixture"))
    assert _kinds(cfg.log_path) == ["received", "end_failure"]
    live = gw.metrics()
    assert live.queries == 1
    assert live.served_by == {"end": 0, "cloud": 0}
    assert replay_events(cfg.log_path) == live


def test_evaluation_unavailable_serves_end(tmp_path):
    end_map = {"q": "end:q"}
    cloud_map = {}  # cloud knows nothing: every evaluation call misses
    cfg = replay_config(tmp_path, end_map, cloud_map)
    gw = Gateway(cfg, sim_scorer=MappingScorer(default=0.9), rel_scorer=MappingScorer(default=0.9))
    resp = gw.handle_chat(ChatRequest(session_id="s", message="q"))
    assert resp.served_by == "end"
    assert resp.breakdown is None
    assert gw.get_record(resp.record_id).state == "answered"
    assert _kinds(cfg.log_path) == ["received", "answered", "evaluation_unavailable", "responded"]
    assert replay_events(cfg.log_path) == gw.metrics()


def test_feedback_satisfied_on_accepted(tmp_path):
    gw, cfg = _gateway(tmp_path, ["q"])
    resp = gw.handle_chat(ChatRequest(session_id="s", message="q"))
    state = gw.handle_feedback(resp.record_id, "satisfied")
    assert state == "accepted"
    record = gw.get_record(resp.record_id)
    assert record.human_verdict == "satisfied"
    assert _kinds(cfg.log_path)[-1] == "feedback"


def test_feedback_dissatisfied_reopens(tmp_path):
    gw, cfg = _gateway(tmp_path, ["q"])
    resp = gw.handle_chat(ChatRequest(session_id="s", message="q"))
    assert gw.get_record(resp.record_id).state == "accepted"
    state = gw.handle_feedback(resp.record_id, "dissatisfied")
    assert state == "queued"
    assert _kinds(cfg.log_path)[-4:] == ["feedback", "escalated", "pseudo_labeled", "queued"]
    pending = gw.queue.pending()
    assert len(pending) == 1
    assert pending[0].output == "cloud:q"  # fresh cloud call on re-open
    assert gw.metrics().escalations == 1
    assert replay_events(cfg.log_path) == gw.metrics()


def test_feedback_rejected_in_wrong_state(tmp_path):
    gw, _ = _gateway(tmp_path, ["q"], low=["q"])
    resp = gw.handle_chat(ChatRequest(session_id="s", message="q"))  # already queued
    with pytest.raises(IllegalTransitionError):
        gw.handle_feedback(resp.record_id, "satisfied")
    with pytest.raises(UnknownRecordError):
        gw.handle_feedback("r-999999", "satisfied")


def test_feedback_bad_verdict(tmp_path):
    gw, _ = _gateway(tmp_path, ["q"])
    resp = gw.handle_chat(ChatRequest(session_id="s", message="q"))
    with pytest.raises(EccError):
        gw.handle_feedback(resp.record_id, "angry")


def test_review_queue_pagination(tmp_path):
    queries = [f"question number {i:02d}" for i in range(25)]
    gw, _ = _gateway(tmp_path, queries)
    for q in queries:
        gw.handle_chat(ChatRequest(session_id="s", message=q))
    items, total = gw.review_queue(page=1, page_size=10)
    assert total == 25 and len(items) == 10
    assert [r.record_id for r in items] == [f"r-{i:06d}" for i in range(1, 11)]
    items, total = gw.review_queue(page=3, page_size=10)
    assert total == 25 and len(items) == 5
    gw.handle_feedback("r-000001", "satisfied")  # verdict removes it from review
    items, total = gw.review_queue(page=1, page_size=10)
    assert total == 24
    assert items[0].record_id == "r-000002"
    with pytest.raises(EccError):
        gw.review_queue(page=0)


def test_flush_queue_dispatches(tmp_path):
    batches = []

    def trainer(spec, batch_path):
        batches.append(batch_path.read_text(encoding="utf-8"))
        return "job-77"

    queries = ["a", "b"]
    end_map = {q: f"end:{q}" for q in queries}
    cloud_map = {q: f"cloud:{q}" for q in queries}
    cfg = replay_config(tmp_path, end_map, cloud_map)
    sim = MappingScorer(default=0.1)  # everything escalates
    gw = Gateway(cfg, sim_scorer=sim, rel_scorer=MappingScorer(default=0.9), trainer=trainer)
    ids = [gw.handle_chat(ChatRequest(session_id="s", message=q)).record_id for q in queries]
    assert gw.metrics().queue_depth == 2
    assert gw.flush_queue() == 2
    assert len(batches) == 1 and batches[0].count("\n") == 2
    for record_id in ids:
        assert gw.get_record(record_id).state == "dispatched"
    dispatched = [e for e in iter_events(cfg.log_path) if e.kind == "dispatched"]
    assert [e.payload["job_id"] for e in dispatched] == ["job-77", "job-77"]
    assert gw.metrics().queue_depth == 0
    assert replay_events(cfg.log_path) == gw.metrics()


def test_auto_drain_at_batch_size(tmp_path):
    gw, cfg = _gateway(tmp_path, ["a", "b", "c"], low=["a", "b", "c"], queue_batch_size=2)
    for q in "ab":
        gw.handle_chat(ChatRequest(session_id="s", message=q))
    # second enqueue hit the batch size and drained automatically
    assert gw.metrics().queue_depth == 0
    assert gw.get_record("r-000001").state == "dispatched"
    assert gw.get_record("r-000002").state == "dispatched"
    gw.handle_chat(ChatRequest(session_id="s", message="c"))
    assert gw.metrics().queue_depth == 1
    assert replay_events(cfg.log_path) == gw.metrics()


def test_live_metrics_equal_replay_mixed_run(tmp_path):
    queries = [f"q{i}" for i in range(30)]
    low = {q for i, q in enumerate(queries) if i % 3 == 0}
    gw, cfg = _gateway(tmp_path, queries, low=low)
    ids = []
    for q in queries:
        ids.append(gw.handle_chat(ChatRequest(session_id="s", message=q)).record_id)
    gw.handle_feedback(ids[1], "dissatisfied")
    gw.handle_feedback(ids[2], "satisfied")
    gw.flush_queue(batch_size=5)
    live = gw.metrics()
    replayed = replay_events(cfg.log_path)
    assert isinstance(live, Metrics) and isinstance(replayed, Metrics)
    assert replayed == live
    assert live.queries == 30
    assert live.escalations == 11  # 10 low-score plus one re-open
    assert live.escalation_rate == pytest.approx(11 / 30, abs=1e-12)


def test_event_log_rejects_unknown_kind(tmp_path):
    log = EventLog(tmp_path / "events.jsonl")
    with pytest.raises(EventLogError):
        log.append("made_up", {})


def test_iter_events_corrupt_line(tmp_path):
    path = tmp_path / "events.jsonl"
    path.write_text("this is not json\n", encoding="utf-8")
    with pytest.raises(EventLogError, match=r"events\.jsonl:1: corrupt event line"):
        list(iter_events(path))


def test_iter_events_sequence_gap(tmp_path):
    path = tmp_path / "events.jsonl"
    rows = [
        {"seq": 1, "kind": "received", "payload": {}, "ts": 0.0},
        {"seq": 3, "kind": "answered", "payload": {}, "ts": 0.0},
    ]
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    with pytest.raises(EventLogError, match=r"events\.jsonl:2: sequence gap \(expected 2, got 3\)"):
        list(iter_events(path))


def test_iter_events_unknown_kind_in_file(tmp_path):
    path = tmp_path / "events.jsonl"
    path.write_text(
        json.dumps({"seq": 1, "kind": "martian", "payload": {}, "ts": 0.0}) + "\n",
        encoding="utf-8",
    )
    with pytest.raises(EventLogError, match=r"unknown event kind 'martian'"):
        list(iter_events(path))


def test_iter_events_missing_file(tmp_path):
    with pytest.raises(EventLogError, match="event log not found"):
        list(iter_events(tmp_path / "nope.jsonl"))


# -- HTTP surface -------------------------------------------------------------


def _client(tmp_path, **overrides):
    # "q" scores 0.8/3 + 0.18 = 0.447 (escalates), "low q" scores 0.26
    # (escalates), "good q" takes the 0.9 default (accepted)
    gw, cfg = _gateway(
        tmp_path,
        ["q", "low q", "good q"],
        low=["low q"],
        sim_overrides={("end:q", "cloud:q"): 1 / 3},
        **overrides,
    )
    return TestClient(create_app(gw)), gw, cfg


def test_api_chat_rounds_scores_but_log_keeps_precision(tmp_path):
    client, gw, cfg = _client(tmp_path)
    resp = client.post("/v1/chat", json={"session_id": "s", "message": "q"})
    assert resp.status_code == 200
    body = resp.json()
    exact_final = 0.8 * (1 / 3) + 0.2 * 0.9
    assert body["breakdown"]["sim"] == 0.333
    assert body["breakdown"]["final"] == round(exact_final, 3)
    evaluated = [e for e in iter_events(cfg.log_path) if e.kind == "evaluated"]
    assert evaluated[0].payload["breakdown"]["sim"] == 1 / 3  # full precision on disk
    assert evaluated[0].payload["breakdown"]["final"] == exact_final


def test_api_feedback_and_review(tmp_path):
    client, gw, cfg = _client(tmp_path)
    record_id = client.post("/v1/chat", json={"message": "good q"}).json()["record_id"]
    queue = client.get("/v1/review/queue").json()
    assert queue["total"] == 1
    assert queue["items"][0]["record_id"] == record_id
    resp = client.post(f"/v1/review/{record_id}", json={"verdict": "dissatisfied"})
    assert resp.status_code == 200
    assert resp.json() == {"record_id": record_id, "state": "queued"}
    assert client.get("/v1/review/queue").json()["total"] == 0
    record = client.get(f"/v1/records/{record_id}").json()
    assert record["state"] == "queued"
    assert record["human_verdict"] == "dissatisfied"


def test_api_error_mapping(tmp_path):
    client, gw, cfg = _client(tmp_path)
    assert client.get("/v1/records/r-999999").status_code == 404
    assert client.post("/v1/chat", json={"message": "   "}).status_code == 400
    assert client.post("/v1/chat", json={"message": "unknown to end"}).status_code == 502
    record_id = client.post("/v1/chat", json={"message": "low q"}).json()["record_id"]
    resp = client.post("/v1/feedback", json={"record_id": record_id, "verdict": "satisfied"})
    assert resp.status_code == 409
    assert resp.json()["kind"] == "IllegalTransitionError"


def test_api_metrics_rounding(tmp_path):
    client, gw, cfg = _client(tmp_path)
    client.post("/v1/chat", json={"message": "good q"})
    client.post("/v1/chat", json={"message": "low q"})
    body = client.get("/v1/metrics").json()
    assert body["queries"] == 2
    assert body["escalations"] == 1
    assert body["escalation_rate"] == 0.5
    mean = (0.9 + 0.26) / 2
    assert body["mean_final"] == round(mean, 3)
    assert body["served_by"] == {"end": 1, "cloud": 1}
    assert body["queue_depth"] == 1


def test_api_cors_header(tmp_path):
    client, gw, cfg = _client(tmp_path)
    resp = client.get("/v1/metrics", headers={"Origin": "http://localhost:5173"})
    assert resp.headers["access-control-allow-origin"] == "*"


def test_api_auth_token(tmp_path, monkeypatch):
    monkeypatch.setenv("ECC_TEST_TOKEN", "sekrit")
    client, gw, cfg = _client(tmp_path, auth_token_env="ECC_TEST_TOKEN")
    assert client.get("/v1/metrics").status_code == 401
    assert client.get("/v1/metrics", headers={"Authorization": "Bearer wrong"}).status_code == 401
    ok = client.get("/v1/metrics", headers={"Authorization": "Bearer sekrit"})
    assert ok.status_code == 200


def test_api_auth_disabled_when_env_unset(tmp_path, monkeypatch):
    monkeypatch.delenv("ECC_TEST_TOKEN", raising=False)
    client, gw, cfg = _client(tmp_path, auth_token_env="ECC_TEST_TOKEN")
    assert client.get("/v1/metrics").status_code == 200
