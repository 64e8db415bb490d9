"""Session persistence for human adjudication of flagged instances.

Each session is one append-only JSONL event log; the current state is a
pure fold over that log, and a derived snapshot JSON is rewritten after
every append for inspection. Verdict writes use optimistic concurrency:
a submission must name the next version for its (item, annotator) slot or
it is rejected with the latest version.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Mapping, Sequence

from ..corpus import Corpus
from ..discovery import ErrorCountLedger
from ..metrics import cohen_kappa

VERDICTS = ("keep", "flip", "uncertain")
RESOLUTIONS = ("consensus_only", "annotator_a_priority")


class ReviewError(ValueError):
    """Invalid review operation."""


class SessionNotFound(ReviewError):
    pass


class VersionConflict(Exception):
    """Stale optimistic version; carries the latest stored version."""

    def __init__(self, incident_id: str, annotator_id: str, latest: int):
        super().__init__(
            f"stale version for {incident_id}/{annotator_id}: latest is {latest}"
        )
        self.incident_id = incident_id
        self.annotator_id = annotator_id
        self.latest = latest


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass(frozen=True)
class SessionItem:
    incident_id: str
    note_a: str
    note_b: str
    current_label: int
    error_count: int
    model_probability: float | None

    def to_dict(self) -> dict[str, object]:
        return {
            "incident_id": self.incident_id,
            "note_a": self.note_a,
            "note_b": self.note_b,
            "current_label": self.current_label,
            "error_count": self.error_count,
            "model_probability": self.model_probability,
        }


@dataclass
class SessionState:
    """Derived, read-only view of one session's event log."""

    session_id: str
    variable: str
    target_source: str
    annotator_ids: tuple[str, ...]
    variable_definition: str
    created_at: str
    items: tuple[SessionItem, ...]
    verdicts: dict[tuple[str, str], list[dict]] = field(default_factory=dict)
    exports: list[dict] = field(default_factory=list)

    def latest(self, incident_id: str, annotator_id: str) -> dict | None:
        history = self.verdicts.get((incident_id, annotator_id))
        return history[-1] if history else None

    def item_complete(self, incident_id: str) -> bool:
        return all(self.latest(incident_id, a) is not None for a in self.annotator_ids)

    def pending(self, annotator_id: str) -> list[str]:
        return [
            item.incident_id
            for item in self.items
            if self.latest(item.incident_id, annotator_id) is None
        ]

    def complete(self) -> bool:
        return all(self.item_complete(item.incident_id) for item in self.items)

    def progress(self) -> dict[str, dict[str, int]]:
        return {
            a: {
                "done": len(self.items) - len(self.pending(a)),
                "pending": len(self.pending(a)),
            }
            for a in self.annotator_ids
        }

    def to_dict(self) -> dict[str, object]:
        return {
            "session_id": self.session_id,
            "variable": self.variable,
            "target_source": self.target_source,
            "annotator_ids": list(self.annotator_ids),
            "variable_definition": self.variable_definition,
            "created_at": self.created_at,
            "items": [item.to_dict() for item in self.items],
            "verdicts": {
                f"{incident}::{annotator}": history
                for (incident, annotator), history in sorted(self.verdicts.items())
            },
            "exports": self.exports,
            "complete": self.complete(),
            "progress": self.progress(),
        }


def fold_events(events: Sequence[Mapping]) -> SessionState:
    """Rebuild session state from its event log (pure)."""
    if not events or events[0].get("type") != "session_created":
        raise ReviewError("event log does not start with session_created")
    head = events[0]
    state = SessionState(
        session_id=str(head["session_id"]),
        variable=str(head["variable"]),
        target_source=str(head["target_source"]),
        annotator_ids=tuple(head["annotator_ids"]),
        variable_definition=str(head.get("variable_definition", "")),
        created_at=str(head["created_at"]),
        items=tuple(
            SessionItem(
                incident_id=i["incident_id"],
                note_a=i["note_a"],
                note_b=i["note_b"],
                current_label=int(i["current_label"]),
                error_count=int(i["error_count"]),
                model_probability=i.get("model_probability"),
            )
            for i in head["items"]
        ),
    )
    for event in events[1:]:
        if event["type"] == "adjudication":
            key = (str(event["incident_id"]), str(event["annotator_id"]))
            state.verdicts.setdefault(key, []).append(
                {
                    "incident_id": event["incident_id"],
                    "annotator_id": event["annotator_id"],
                    "verdict": event["verdict"],
                    "note": event.get("note", ""),
                    "version": int(event["version"]),
                    "timestamp": event["timestamp"],
                }
            )
        elif event["type"] == "export":
            state.exports.append(
                {
                    "export_version": int(event["export_version"]),
                    "resolution": event["resolution"],
                    "content": event["content"],
                }
            )
        else:
            raise ReviewError(f"unknown event type {event.get('type')!r}")
    return state


class SessionStore:
    """Append-only JSONL event logs, one per session, under one directory."""

    def __init__(self, root: str | Path, clock: Callable[[], str] = _utc_now):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._clock = clock
        self._lock = threading.Lock()

    # -- paths and io

    def _log_path(self, session_id: str) -> Path:
        return self.root / f"{session_id}.events.jsonl"

    def _snapshot_path(self, session_id: str) -> Path:
        return self.root / f"{session_id}.snapshot.json"

    def _read_events(self, session_id: str) -> list[dict]:
        path = self._log_path(session_id)
        if not path.exists():
            raise SessionNotFound(f"unknown session {session_id!r}")
        with path.open("r", encoding="utf-8") as fh:
            return [json.loads(line) for line in fh if line.strip()]

    def _append(self, session_id: str, event: Mapping) -> SessionState:
        with self._log_path(session_id).open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
        state = self.replay(session_id)
        self._snapshot_path(session_id).write_text(
            json.dumps(state.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        return state

    # -- queries

    def list_sessions(self) -> list[str]:
        return sorted(p.name.removesuffix(".events.jsonl") for p in self.root.glob("*.events.jsonl"))

    def replay(self, session_id: str) -> SessionState:
        return fold_events(self._read_events(session_id))

    def get(self, session_id: str) -> SessionState:
        return self.replay(session_id)

    def snapshot(self, session_id: str) -> dict:
        path = self._snapshot_path(session_id)
        if not path.exists():
            raise SessionNotFound(f"no snapshot for session {session_id!r}")
        return json.loads(path.read_text(encoding="utf-8"))

    # -- commands

    def create_session(
        self,
        ledger: ErrorCountLedger,
        corpus: Corpus,
        annotator_ids: Sequence[str],
        variable_definition: str = "",
    ) -> SessionState:
        """Open a session over the ledger's flags, worst error counts first."""
        if not ledger.flags:
            raise ReviewError("ledger has no flags; nothing to review")
        if not 1 <= len(annotator_ids) <= 2:
            raise ReviewError("sessions take one or two annotator ids")
        if len(set(annotator_ids)) != len(annotator_ids):
            raise ReviewError("annotator ids must be distinct")
        missing = [i for i in ledger.flags if i not in corpus]
        if missing:
            raise ReviewError(f"flagged ids missing from corpus: {missing[:5]}")
        items = []
        for incident_id in sorted(
            ledger.flags, key=lambda i: (-ledger.counts[i], i)
        ):
            inc = corpus[incident_id]
            items.append(
                SessionItem(
                    incident_id=incident_id,
                    note_a=inc.note_a,
                    note_b=inc.note_b,
                    current_label=int(inc.labels[ledger.variable]),
                    error_count=int(ledger.counts[incident_id]),
                    model_probability=ledger.probabilities.get(incident_id),
                )
            )
        session_id = uuid.uuid4().hex[:12]
        event = {
            "type": "session_created",
            "session_id": session_id,
            "variable": ledger.variable,
            "target_source": ledger.target_source,
            "annotator_ids": list(annotator_ids),
            "variable_definition": variable_definition,
            "created_at": self._clock(),
            "items": [item.to_dict() for item in items],
        }
        with self._lock:
            return self._append(session_id, event)

    def submit(
        self,
        session_id: str,
        incident_id: str,
        annotator_id: str,
        verdict: str,
        note: str = "",
        version: int = 1,
    ) -> dict:
        """Append one verdict; ``version`` must be latest + 1 for its slot."""
        if verdict not in VERDICTS:
            raise ReviewError(f"unknown verdict {verdict!r} (expected one of {VERDICTS})")
        with self._lock:
            state = self.replay(session_id)
            if annotator_id not in state.annotator_ids:
                raise ReviewError(f"annotator {annotator_id!r} is not part of the session")
            if incident_id not in {item.incident_id for item in state.items}:
                raise ReviewError(f"incident {incident_id!r} is not part of the session")
            latest = state.latest(incident_id, annotator_id)
            expected = (latest["version"] + 1) if latest else 1
            if version != expected:
                raise VersionConflict(incident_id, annotator_id, latest["version"] if latest else 0)
            event = {
                "type": "adjudication",
                "incident_id": incident_id,
                "annotator_id": annotator_id,
                "verdict": verdict,
                "note": note,
                "version": version,
                "timestamp": self._clock(),
            }
            new_state = self._append(session_id, event)
        return new_state.latest(incident_id, annotator_id)  # type: ignore[return-value]

    def items_view(
        self,
        session_id: str,
        annotator_id: str | None = None,
        status: str | None = None,
    ) -> list[dict]:
        """Items annotated with the caller's verdict state and the peer's
        done/pending status; peer verdicts stay hidden until both are done."""
        state = self.replay(session_id)
        if annotator_id is not None and annotator_id not in state.annotator_ids:
            raise ReviewError(f"annotator {annotator_id!r} is not part of the session")
        out = []
        for item in state.items:
            row = item.to_dict()
            complete = state.item_complete(item.incident_id)
            if annotator_id is not None:
                mine = state.latest(item.incident_id, annotator_id)
                row["my_verdict"] = mine["verdict"] if mine else None
                row["my_version"] = mine["version"] if mine else 0
                peers = [a for a in state.annotator_ids if a != annotator_id]
                row["peer_status"] = (
                    "done"
                    if all(state.latest(item.incident_id, p) is not None for p in peers)
                    else "pending"
                )
                if complete:  # blinding: peer verdicts only after both are in
                    row["peer_verdicts"] = {
                        p: state.latest(item.incident_id, p)["verdict"] for p in peers  # type: ignore[index]
                    }
                item_status = "pending" if mine is None else mine["verdict"]
            else:
                item_status = "done" if complete else "pending"
            if status is not None:
                if status == "pending" and item_status != "pending":
                    continue
                if status == "done" and item_status == "pending":
                    continue
            out.append(row)
        return out

    def compute_iaa(self, session_id: str) -> dict:
        """Cohen's kappa over keep/flip verdicts of a complete two-annotator session."""
        state = self.replay(session_id)
        if len(state.annotator_ids) != 2:
            raise ReviewError("inter-annotator agreement needs a two-annotator session")
        pending = {
            a: state.pending(a) for a in state.annotator_ids if state.pending(a)
        }
        if pending:
            raise ReviewError(f"session incomplete; pending items: {pending}")
        a_id, b_id = state.annotator_ids
        labels_a, labels_b = [], []
        used = 0
        for item in state.items:
            va = state.latest(item.incident_id, a_id)["verdict"]  # type: ignore[index]
            vb = state.latest(item.incident_id, b_id)["verdict"]  # type: ignore[index]
            if "uncertain" in (va, vb):
                continue
            labels_a.append(1 if va == "flip" else 0)
            labels_b.append(1 if vb == "flip" else 0)
            used += 1
        if not used:
            raise ReviewError("no items with two definite verdicts")
        return {"kappa": cohen_kappa(labels_a, labels_b), "items_used": used}

    # -- export

    def _export_content(self, state: SessionState, resolution: str) -> dict:
        adjudications = []
        disagreements = []
        uncertain = []
        for item in state.items:
            verdicts = {
                a: state.latest(item.incident_id, a)["verdict"]  # type: ignore[index]
                for a in state.annotator_ids
            }
            values = list(verdicts.values())
            if "uncertain" in values:
                uncertain.append({"incident_id": item.incident_id, "verdicts": verdicts})
                continue
            if len(set(values)) > 1:
                disagreements.append({"incident_id": item.incident_id, "verdicts": verdicts})
                if resolution == "consensus_only":
                    continue
            if resolution == "annotator_a_priority":
                decided = verdicts[state.annotator_ids[0]]
            else:
                decided = values[0]
            if decided == "flip":
                latest_version = max(
                    state.latest(item.incident_id, a)["version"] for a in state.annotator_ids  # type: ignore[index]
                )
                latest_time = max(
                    state.latest(item.incident_id, a)["timestamp"] for a in state.annotator_ids  # type: ignore[index]
                )
                adjudications.append(
                    {
                        "adjudication_id": f"{state.session_id}-{item.incident_id}",
                        "incident_id": item.incident_id,
                        "annotator_id": resolution,
                        "verdict": "flip",
                        "note": "",
                        "version": latest_version,
                        "timestamp": latest_time,
                    }
                )
        return {
            "session_id": state.session_id,
            "variable": state.variable,
            "target_source": state.target_source,
            "resolution": resolution,
            "adjudications": adjudications,
            "disagreements": disagreements,
            "uncertain": uncertain,
        }

    def export(self, session_id: str, resolution: str = "consensus_only") -> dict:
        """Freeze the correction list; re-exporting an unchanged session is
        byte-identical and does not bump the export version."""
        if resolution not in RESOLUTIONS:
            raise ReviewError(f"unknown resolution {resolution!r} (expected {RESOLUTIONS})")
        with self._lock:
            state = self.replay(session_id)
            if not state.complete():
                raise ReviewError(
                    f"session incomplete; pending items: "
                    f"{ {a: state.pending(a) for a in state.annotator_ids if state.pending(a)} }"
                )
            content = self._export_content(state, resolution)
            for past in state.exports:
                if past["content"] == content and past["resolution"] == resolution:
                    return {"export_version": past["export_version"], **content}
            export_version = len(state.exports) + 1
            self._append(
                session_id,
                {
                    "type": "export",
                    "export_version": export_version,
                    "resolution": resolution,
                    "content": content,
                },
            )
        return {"export_version": export_version, **content}
