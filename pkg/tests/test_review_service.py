import json
import threading

import pytest
from fastapi.testclient import TestClient

from labelaudit.corpus import write_corpus_jsonl
from labelaudit.discovery import DiscoveryConfig, ErrorCountLedger, save_ledger
from labelaudit.review.app import create_app
from labelaudit.review.store import (
    ReviewError,
    SessionStore,
    VersionConflict,
    fold_events,
)
from labelaudit.synth import SynthSpec, generate
from labelaudit.verification import Adjudication, apply_corrections


@pytest.fixture(scope="module")
def corpus_and_ledger():
    spec = SynthSpec(sources=1, instances_per_source=40, seed=3)
    corpus, _ = generate(spec)
    ids = corpus.ids()[:8]
    counts = {i: 5 - (k % 2) for k, i in enumerate(ids)}  # counts 5,4,5,4,...
    all_counts = {i: counts.get(i, 0) for i in corpus.ids() if corpus[i].source == "s00"}
    ledger = ErrorCountLedger(
        variable=spec.variable,
        target_source="s00",
        config=DiscoveryConfig(k=5, repetitions=5, threshold=4),
        counts=all_counts,
        flags=tuple(sorted(ids, key=lambda i: (-counts[i], i))),
        histogram={c: sum(1 for v in all_counts.values() if v == c) for c in range(6)},
        probabilities={i: 0.25 for i in ids},
    )
    return corpus, ledger


@pytest.fixture()
def store(tmp_path):
    ticks = iter(range(100000))
    return SessionStore(tmp_path / "store", clock=lambda: f"2026-01-01T00:00:{next(ticks):02d}")


def make_session(store, corpus_and_ledger, annotators=("alice", "bob")):
    corpus, ledger = corpus_and_ledger
    return store.create_session(ledger, corpus, list(annotators), "definition text")


def test_create_session_orders_items_by_error_count(store, corpus_and_ledger):
    state = make_session(store, corpus_and_ledger)
    counts = [item.error_count for item in state.items]
    assert counts == sorted(counts, reverse=True)
    assert len(state.items) == 8
    ids_at_5 = [i.incident_id for i in state.items if i.error_count == 5]
    assert ids_at_5 == sorted(ids_at_5)
    assert state.items[0].model_probability == 0.25
    assert state.variable_definition == "definition text"


def test_create_session_validation(store, corpus_and_ledger):
    corpus, ledger = corpus_and_ledger
    import dataclasses

    with pytest.raises(ReviewError, match="no flags"):
        store.create_session(dataclasses.replace(ledger, flags=()), corpus, ["a"])
    with pytest.raises(ReviewError, match="distinct"):
        store.create_session(ledger, corpus, ["a", "a"])
    with pytest.raises(ReviewError, match="one or two"):
        store.create_session(ledger, corpus, ["a", "b", "c"])


def test_submit_and_versioning(store, corpus_and_ledger):
    state = make_session(store, corpus_and_ledger)
    item = state.items[0].incident_id
    stored = store.submit(state.session_id, item, "alice", "flip", version=1)
    assert stored["version"] == 1
    stored = store.submit(state.session_id, item, "alice", "keep", version=2)
    assert stored["version"] == 2
    with pytest.raises(VersionConflict) as exc:
        store.submit(state.session_id, item, "alice", "flip", version=2)
    assert exc.value.latest == 2


def test_submit_validation(store, corpus_and_ledger):
    state = make_session(store, corpus_and_ledger)
    with pytest.raises(ReviewError, match="not part of the session"):
        store.submit(state.session_id, "nope", "alice", "flip", version=1)
    with pytest.raises(ReviewError, match="annotator"):
        store.submit(state.session_id, state.items[0].incident_id, "zz", "flip", version=1)
    with pytest.raises(ReviewError, match="verdict"):
        store.submit(state.session_id, state.items[0].incident_id, "alice", "maybe", version=1)


def test_concurrent_submits_exactly_one_wins(store, corpus_and_ledger):
    state = make_session(store, corpus_and_ledger)
    item = state.items[0].incident_id
    results = []

    def submit(verdict):
        try:
            store.submit(state.session_id, item, "alice", verdict, version=1)
            results.append(("ok", verdict))
        except VersionConflict as exc:
            results.append(("conflict", exc.latest))

    threads = [threading.Thread(target=submit, args=(v,)) for v in ("flip", "keep")]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    outcomes = sorted(r[0] for r in results)
    assert outcomes == ["conflict", "ok"]


def test_items_view_blinds_peer_verdicts(store, corpus_and_ledger):
    state = make_session(store, corpus_and_ledger)
    item = state.items[0].incident_id
    store.submit(state.session_id, item, "alice", "flip", version=1)
    view_bob = {r["incident_id"]: r for r in store.items_view(state.session_id, "bob")}
    assert view_bob[item]["peer_status"] == "done"
    assert "peer_verdicts" not in view_bob[item]  # bob has not voted yet
    store.submit(state.session_id, item, "bob", "keep", version=1)
    view_bob = {r["incident_id"]: r for r in store.items_view(state.session_id, "bob")}
    assert view_bob[item]["peer_verdicts"] == {"alice": "flip"}
    pending = store.items_view(state.session_id, "bob", status="pending")
    assert item not in {r["incident_id"] for r in pending}


def complete_session(store, state, verdicts_a, verdicts_b):
    for item, va, vb in zip(state.items, verdicts_a, verdicts_b):
        store.submit(state.session_id, item.incident_id, "alice", va, version=1)
        store.submit(state.session_id, item.incident_id, "bob", vb, version=1)


def test_compute_iaa_perfect_agreement(store, corpus_and_ledger):
    state = make_session(store, corpus_and_ledger)
    verdicts = ["flip", "keep"] * 4
    complete_session(store, state, verdicts, verdicts)
    result = store.compute_iaa(state.session_id)
    assert result["kappa"] == 1.0
    assert result["items_used"] == 8


def test_compute_iaa_incomplete_errors(store, corpus_and_ledger):
    state = make_session(store, corpus_and_ledger)
    store.submit(state.session_id, state.items[0].incident_id, "alice", "flip", version=1)
    with pytest.raises(ReviewError, match="pending"):
        store.compute_iaa(state.session_id)


def test_compute_iaa_single_annotator_errors(store, corpus_and_ledger):
    state = make_session(store, corpus_and_ledger, annotators=("solo",))
    for item in state.items:
        store.submit(state.session_id, item.incident_id, "solo", "keep", version=1)
    with pytest.raises(ReviewError, match="two-annotator"):
        store.compute_iaa(state.session_id)


def test_compute_iaa_excludes_uncertain(store, corpus_and_ledger):
    state = make_session(store, corpus_and_ledger)
    va = ["flip", "uncertain"] + ["keep"] * 6
    vb = ["flip", "keep"] + ["keep"] * 6
    complete_session(store, state, va, vb)
    result = store.compute_iaa(state.session_id)
    assert result["items_used"] == 7


def test_export_consensus_and_disagreements(store, corpus_and_ledger):
    state = make_session(store, corpus_and_ledger)
    va = ["flip", "flip", "keep", "keep", "flip", "uncertain", "keep", "flip"]
    vb = ["flip", "keep", "keep", "keep", "flip", "keep", "keep", "flip"]
    complete_session(store, state, va, vb)
    export = store.export(state.session_id, "consensus_only")
    flipped = {a["incident_id"] for a in export["adjudications"]}
    expected = {
        state.items[k].incident_id for k in range(8) if va[k] == vb[k] == "flip"
    }
    assert flipped == expected
    assert {d["incident_id"] for d in export["disagreements"]} == {
        state.items[1].incident_id
    }
    assert {u["incident_id"] for u in export["uncertain"]} == {state.items[5].incident_id}


def test_export_annotator_a_priority(store, corpus_and_ledger):
    state = make_session(store, corpus_and_ledger)
    va = ["flip"] * 8
    vb = ["keep"] * 8
    complete_session(store, state, va, vb)
    export = store.export(state.session_id, "annotator_a_priority")
    assert len(export["adjudications"]) == 8
    assert len(export["disagreements"]) == 8


def test_export_requires_complete_session(store, corpus_and_ledger):
    state = make_session(store, corpus_and_ledger)
    with pytest.raises(ReviewError, match="incomplete"):
        store.export(state.session_id)


def test_export_idempotent_and_versioned(store, corpus_and_ledger):
    state = make_session(store, corpus_and_ledger)
    complete_session(store, state, ["flip"] * 8, ["flip"] * 8)
    first = store.export(state.session_id)
    second = store.export(state.session_id)
    assert json.dumps(first, sort_keys=True) == json.dumps(second, sort_keys=True)
    assert first["export_version"] == 1
    # a changed session yields a new export version
    store.submit(state.session_id, state.items[0].incident_id, "alice", "keep", version=2)
    third = store.export(state.session_id)
    assert third["export_version"] == 2
    assert len(third["adjudications"]) == 7


def test_export_feeds_apply_corrections(store, corpus_and_ledger):
    corpus, ledger = corpus_and_ledger
    state = make_session(store, corpus_and_ledger)
    complete_session(store, state, ["flip"] * 8, ["flip"] * 8)
    export = store.export(state.session_id)
    adjudications = [Adjudication.from_dict(d) for d in export["adjudications"]]
    view = apply_corrections(corpus, corpus.ids(), ledger.variable, adjudications, ledger.flags)
    assert set(view.overrides) == set(ledger.flags)
    for incident_id, label in view.overrides.items():
        assert label == 1 - int(corpus.label(incident_id, ledger.variable))


def test_state_is_pure_fold_of_log(store, corpus_and_ledger):
    state = make_session(store, corpus_and_ledger)
    store.submit(state.session_id, state.items[0].incident_id, "alice", "flip", version=1)
    store.submit(state.session_id, state.items[0].incident_id, "alice", "keep", version=2)
    events = store._read_events(state.session_id)
    replayed = fold_events(events)
    assert replayed.to_dict() == store.get(state.session_id).to_dict()
    assert store.snapshot(state.session_id) == replayed.to_dict()


# ---------------------------------------------------------------------------
# HTTP API


@pytest.fixture()
def client(tmp_path, corpus_and_ledger):
    corpus, ledger = corpus_and_ledger
    corpus_path = tmp_path / "corpus.jsonl"
    ledger_path = tmp_path / "ledger.json"
    write_corpus_jsonl(corpus, corpus_path)
    save_ledger(ledger, ledger_path)
    ticks = iter(range(100000))
    store = SessionStore(tmp_path / "store", clock=lambda: f"2026-01-01T00:00:{next(ticks):02d}")
    app = create_app(store, static_dir=None)
    return TestClient(app), str(corpus_path), str(ledger_path)


def create_http_session(client_tuple, annotators=("alice", "bob")):
    client, corpus_path, ledger_path = client_tuple
    response = client.post(
        "/api/sessions",
        json={
            "ledger_path": ledger_path,
            "corpus_path": corpus_path,
            "annotator_ids": list(annotators),
        },
    )
    assert response.status_code == 201, response.text
    return response.json()


def test_http_session_lifecycle(client):
    session = create_http_session(client)
    http, _, _ = client
    sid = session["session_id"]
    assert len(session["items"]) == 8

    listed = http.get("/api/sessions").json()
    assert sid in listed["sessions"]

    item = session["items"][0]["incident_id"]
    response = http.post(
        f"/api/sessions/{sid}/adjudications",
        json={"incident_id": item, "annotator_id": "alice", "verdict": "flip", "version": 1},
    )
    assert response.status_code == 201
    stale = http.post(
        f"/api/sessions/{sid}/adjudications",
        json={"incident_id": item, "annotator_id": "alice", "verdict": "keep", "version": 1},
    )
    assert stale.status_code == 409
    assert stale.json()["detail"]["latest_version"] == 1

    items = http.get(f"/api/sessions/{sid}/items", params={"annotator": "alice"}).json()["items"]
    assert {r["incident_id"] for r in items} == {i["incident_id"] for i in session["items"]}
    pending = http.get(
        f"/api/sessions/{sid}/items", params={"annotator": "alice", "status": "pending"}
    ).json()["items"]
    assert item not in {r["incident_id"] for r in pending}

    iaa = http.get(f"/api/sessions/{sid}/iaa")
    assert iaa.status_code == 409  # incomplete

    for row in session["items"]:
        for annotator in ("alice", "bob"):
            if row["incident_id"] == item and annotator == "alice":
                continue
            response = http.post(
                f"/api/sessions/{sid}/adjudications",
                json={
                    "incident_id": row["incident_id"],
                    "annotator_id": annotator,
                    "verdict": "flip",
                    "version": 1,
                },
            )
            assert response.status_code == 201
    iaa = http.get(f"/api/sessions/{sid}/iaa")
    assert iaa.status_code == 200
    assert iaa.json()["kappa"] == 1.0

    export = http.post(f"/api/sessions/{sid}/export", json={"resolution": "consensus_only"})
    assert export.status_code == 200
    assert len(export.json()["adjudications"]) == 8


def test_http_unknown_session_404(client):
    http, _, _ = client
    assert http.get("/api/sessions/zzzz").status_code == 404
    assert http.get("/api/sessions/zzzz/iaa").status_code == 404


def test_http_bad_create_request(client):
    http, corpus_path, _ = client
    response = http.post(
        "/api/sessions",
        json={
            "ledger_path": "/nonexistent/ledger.json",
            "corpus_path": corpus_path,
            "annotator_ids": ["a"],
        },
    )
    assert response.status_code == 400
