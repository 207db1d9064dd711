"""Coarse-to-fine collective-annotation workflow with event-sourced persistence.

Every state mutation is an append-only event; replaying the log against the
same item queue reconstructs the live state exactly, which gives crash
recovery and a full audit trail for free. Claims are lease-based so items
abandoned mid-annotation return to the queue instead of sticking forever.

The HTTP layer is a thin adapter over :class:`AnnotationStore`; the store
itself is safe under concurrent annotators because every mutation is
serialized through one lock around the log appender.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Sequence

from fastapi import FastAPI, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import StreamingResponse
from pydantic import BaseModel, Field

from .model import GT_DIMENSIONS, CorpusError, GroundTruth, VideoRecord, canonical_json

EVENT_KINDS = ("claim", "title_verdict", "caption_set", "labels_set",
               "usertags_verified", "review_fix", "finalize")
ITEM_STATES = ("pending", "title_rejected", "annotated", "discarded", "reviewed")

# title gate, caption, three label dimensions, user-tag check, then finalize
STEP_SEQUENCE: tuple[tuple[str, Optional[str]], ...] = (
    ("title_verdict", None),
    ("caption_set", None),
    ("labels_set", "object"),
    ("labels_set", "action"),
    ("labels_set", "scene"),
    ("usertags_verified", None),
    ("finalize", None),
)

CAPTION_SOFT_LIMIT = 80
DEFAULT_LEASE_S = 1800.0


class WorkflowError(Exception):
    """A request violated the claim or step-order rules (HTTP 409)."""


@dataclass(frozen=True)
class AnnotationEvent:
    seq: int
    ts: float
    annotator: str
    video_id: str
    kind: str
    payload: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in EVENT_KINDS:
            raise CorpusError(f"unknown event kind {self.kind!r}")
        object.__setattr__(self, "payload", dict(self.payload))

    def to_dict(self) -> dict[str, Any]:
        return {"seq": self.seq, "ts": self.ts, "annotator": self.annotator,
                "video_id": self.video_id, "kind": self.kind,
                "payload": dict(self.payload)}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "AnnotationEvent":
        return cls(seq=int(data["seq"]), ts=float(data["ts"]),
                   annotator=data["annotator"], video_id=data["video_id"],
                   kind=data["kind"], payload=dict(data.get("payload", {})))


def _fresh_draft() -> dict[str, Any]:
    return {
        "title_relevant": None,
        "caption": None,
        "labels": {dim: [] for dim in GT_DIMENSIONS},
        "translations": None,
    }


class AnnotationStore:
    """Item queue, claims, drafts and the event log behind the service."""

    def __init__(self, videos: Sequence[VideoRecord],
                 log_path: Optional[str | Path] = None,
                 lease_s: float = DEFAULT_LEASE_S,
                 clock: Callable[[], float] = time.time,
                 snapshot_path: Optional[str | Path] = None,
                 snapshot_every: int = 500,
                 media_url_template: Optional[str] = None):
        self._lock = threading.RLock()
        self._videos = {video.id: video for video in videos}
        if len(self._videos) != len(videos):
            raise CorpusError("duplicate video ids in the annotation queue")
        self._order = [video.id for video in videos]
        self._items: dict[str, dict[str, Any]] = {
            vid: self._fresh_item(vid, idx) for idx, vid in enumerate(self._order)
        }
        self._events: list[AnnotationEvent] = []
        self._recent_labels: dict[str, list[str]] = {dim: [] for dim in GT_DIMENSIONS}
        self._log_path = Path(log_path) if log_path is not None else None
        self._snapshot_path = Path(snapshot_path) if snapshot_path is not None else None
        self._snapshot_every = snapshot_every
        self.lease_s = lease_s
        self._clock = clock
        self._media_url_template = media_url_template
        self._seq_base = 0  # nonzero after loading from a snapshot

    @staticmethod
    def _fresh_item(video_id: str, index: int) -> dict[str, Any]:
        return {"video_id": video_id, "index": index, "state": "pending",
                "assigned_to": None, "claimed_at": None, "step_cursor": 0,
                "draft": _fresh_draft()}

    # ---------------------------------------------------------------- loading

    @classmethod
    def from_log(cls, videos: Sequence[VideoRecord], log_path: str | Path,
                 **kwargs: Any) -> "AnnotationStore":
        """Rebuild state by replaying an existing log (plus snapshot, if one
        is configured and present), then keep appending to the same log."""
        store = cls(videos, log_path=log_path, **kwargs)
        if store._snapshot_path is not None and store._snapshot_path.exists():
            store._seq_base = store._load_snapshot(store._snapshot_path)
        path = Path(log_path)
        if path.exists():
            with open(path, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    event = AnnotationEvent.from_dict(json.loads(line))
                    if event.seq <= store._seq_base:
                        continue
                    if event.seq != store._next_seq():
                        raise CorpusError(
                            f"{path.name} line {lineno}: event seq {event.seq} out of order")
                    store._events.append(event)
                    store._apply(event)
        return store

    @classmethod
    def replay(cls, videos: Sequence[VideoRecord],
               events: Sequence[AnnotationEvent], **kwargs: Any) -> "AnnotationStore":
        """In-memory reconstruction from an event sequence (no log writes)."""
        store = cls(videos, log_path=None, **kwargs)
        for event in events:
            store._events.append(event)
            store._apply(event)
        return store

    # ------------------------------------------------------------- event core

    def _next_seq(self) -> int:
        return self._seq_base + len(self._events) + 1

    def _emit(self, kind: str, annotator: str, video_id: str,
              payload: Mapping[str, Any]) -> AnnotationEvent:
        event = AnnotationEvent(seq=self._next_seq(), ts=self._clock(),
                                annotator=annotator, video_id=video_id,
                                kind=kind, payload=payload)
        if self._log_path is not None:
            with open(self._log_path, "a", encoding="utf-8") as fh:
                fh.write(canonical_json(event.to_dict()) + "\n")
        self._events.append(event)
        self._apply(event)
        if (self._snapshot_path is not None and self._snapshot_every > 0
                and len(self._events) % self._snapshot_every == 0):
            self.save_snapshot(self._snapshot_path)
        return event

    def _apply(self, event: AnnotationEvent) -> None:
        """Mechanical state transition; all request validation happens before
        an event is emitted, so replay applies blindly and deterministically."""
        item = self._items[event.video_id]
        draft = item["draft"]
        payload = event.payload
        if event.kind == "claim":
            item["assigned_to"] = event.annotator
            item["claimed_at"] = event.ts
            if not payload.get("renew", False):
                item["step_cursor"] = 0
                item["draft"] = _fresh_draft()
        elif event.kind == "title_verdict":
            draft["title_relevant"] = bool(payload["relevant"])
            if draft["title_relevant"]:
                item["step_cursor"] = 1
            else:
                item["state"] = "title_rejected"
                item["assigned_to"] = None
        elif event.kind == "caption_set":
            draft["caption"] = payload["caption"]
            item["step_cursor"] = 2
        elif event.kind == "labels_set":
            dim = payload["dimension"]
            draft["labels"][dim] = list(payload["labels"])
            item["step_cursor"] += 1
            self._remember_labels(dim, payload["labels"])
        elif event.kind == "usertags_verified":
            draft["labels"]["user_tag"] = list(payload["tags"])
            item["step_cursor"] = 6
        elif event.kind == "finalize":
            complete = all(draft["labels"][dim] for dim in GT_DIMENSIONS)
            item["state"] = "annotated" if complete else "discarded"
            item["assigned_to"] = None
            item["step_cursor"] = 7
        elif event.kind == "review_fix":
            fixes = payload.get("fixes", {})
            if "caption" in fixes:
                draft["caption"] = fixes["caption"]
            for dim, labels in fixes.get("labels", {}).items():
                draft["labels"][dim] = list(labels)
                self._remember_labels(dim, labels)
            draft["translations"] = payload.get("translations", {})
            item["state"] = "reviewed"

    def _remember_labels(self, dim: str, labels: Sequence[str]) -> None:
        recent = self._recent_labels[dim]
        for label in labels:
            if label in recent:
                recent.remove(label)
            recent.append(label)
        del recent[:-30]

    # ------------------------------------------------------------ claim logic

    def _claim_active(self, item: Mapping[str, Any], now: float) -> bool:
        return (item["assigned_to"] is not None
                and now - item["claimed_at"] < self.lease_s)

    def next_item(self, annotator: str) -> Optional[dict[str, Any]]:
        """Claim and return the lowest-index pending item whose claim is free
        or expired; None when the queue has nothing servable."""
        with self._lock:
            now = self._clock()
            for vid in self._order:
                item = self._items[vid]
                if item["state"] != "pending" or self._claim_active(item, now):
                    continue
                self._emit("claim", annotator, vid, {"lease_s": self.lease_s})
                return self.item_view(vid)
            return None

    def renew(self, annotator: str, video_id: str) -> dict[str, Any]:
        with self._lock:
            item = self._require_item(video_id)
            if item["state"] != "pending":
                raise WorkflowError(f"video {video_id}: state {item['state']} has no lease")
            if item["assigned_to"] != annotator:
                raise WorkflowError(f"video {video_id}: claim held by {item['assigned_to']}")
            if not self._claim_active(item, self._clock()):
                raise WorkflowError(f"video {video_id}: lease expired")
            self._emit("claim", annotator, video_id,
                       {"lease_s": self.lease_s, "renew": True})
            return self.item_view(video_id)

    # -------------------------------------------------------------- annotation

    def submit_step(self, annotator: str, video_id: str, step: str,
                    payload: Optional[Mapping[str, Any]] = None
                    ) -> tuple[dict[str, Any], list[str]]:
        """Apply one workflow step; steps must arrive in the documented
        coarse-to-fine order and under a live claim."""
        payload = dict(payload or {})
        with self._lock:
            item = self._require_item(video_id)
            if item["state"] == "title_rejected":
                raise WorkflowError(f"video {video_id}: title was rejected, item closed")
            if item["state"] != "pending":
                raise WorkflowError(f"video {video_id}: already {item['state']}")
            if item["assigned_to"] != annotator:
                raise WorkflowError(
                    f"video {video_id}: claim held by {item['assigned_to']!r}, not {annotator!r}")
            if not self._claim_active(item, self._clock()):
                raise WorkflowError(f"video {video_id}: lease expired")

            expected_step, expected_dim = STEP_SEQUENCE[item["step_cursor"]]
            given_dim = payload.get("dimension") if step == "labels_set" else None
            if step != expected_step or given_dim != expected_dim:
                want = expected_step if expected_dim is None else f"{expected_step}({expected_dim})"
                got = step if given_dim is None else f"{step}({given_dim})"
                raise WorkflowError(f"video {video_id}: expected step {want}, got {got}")

            warnings = self._validate_step_payload(item, step, payload)
            self._emit(step, annotator, video_id, payload)
            return self.item_view(video_id), warnings

    def _validate_step_payload(self, item: Mapping[str, Any], step: str,
                               payload: Mapping[str, Any]) -> list[str]:
        warnings: list[str] = []
        if step == "title_verdict":
            if not isinstance(payload.get("relevant"), bool):
                raise WorkflowError("title_verdict needs a boolean 'relevant'")
        elif step == "caption_set":
            caption = payload.get("caption")
            if not isinstance(caption, str) or not caption.strip():
                raise WorkflowError("caption_set needs a nonempty 'caption'")
            if len(caption) > CAPTION_SOFT_LIMIT:
                warnings.append(
                    f"caption is {len(caption)} characters, over the soft "
                    f"limit of {CAPTION_SOFT_LIMIT}")
        elif step == "labels_set":
            labels = payload.get("labels")
            if not isinstance(labels, list) or any(
                    not isinstance(l, str) or not l.strip() for l in labels):
                raise WorkflowError("labels_set needs a list of nonempty labels")
        elif step == "usertags_verified":
            tags = payload.get("tags")
            if not isinstance(tags, list):
                raise WorkflowError("usertags_verified needs a 'tags' list")
            allowed = {t.strip() for t in self._videos[item["video_id"]].user_tags}
            stray = [t for t in tags if t.strip() not in allowed]
            if stray:
                raise WorkflowError(f"tags not among the video's user tags: {stray}")
        return warnings

    # ----------------------------------------------------------------- review

    def review(self, reviewer: str, video_id: str,
               fixes: Optional[Mapping[str, Any]] = None,
               translations: Optional[Mapping[str, Any]] = None) -> dict[str, Any]:
        """Apply the review board's fixes and English translations to an
        annotated item. A fix may not empty any label dimension: reviewed
        records must satisfy the completeness rule. Discards are final."""
        fixes = dict(fixes or {})
        translations = dict(translations or {})
        with self._lock:
            item = self._require_item(video_id)
            if item["state"] != "annotated":
                raise WorkflowError(
                    f"video {video_id}: only annotated items can be reviewed "
                    f"(state is {item['state']})")
            merged = {dim: list(item["draft"]["labels"][dim]) for dim in GT_DIMENSIONS}
            for dim, labels in fixes.get("labels", {}).items():
                if dim not in GT_DIMENSIONS:
                    raise WorkflowError(f"unknown label dimension {dim!r}")
                merged[dim] = list(labels)
            empty = [dim for dim in GT_DIMENSIONS if not merged[dim]]
            if empty:
                raise WorkflowError(
                    f"fix would leave empty dimension(s): {', '.join(empty)}")
            caption = fixes.get("caption", item["draft"]["caption"])
            if not isinstance(caption, str) or not caption.strip():
                raise WorkflowError("fix would leave an empty caption")
            for dim in translations.get("labels", {}):
                if dim not in GT_DIMENSIONS:
                    raise WorkflowError(f"unknown label dimension {dim!r}")
            self._emit("review_fix", reviewer, video_id,
                       {"fixes": fixes, "translations": translations})
            return self.item_view(video_id)

    # ----------------------------------------------------------------- reads

    def _require_item(self, video_id: str) -> dict[str, Any]:
        item = self._items.get(video_id)
        if item is None:
            raise KeyError(video_id)
        return item

    def item_view(self, video_id: str) -> dict[str, Any]:
        with self._lock:
            item = self._require_item(video_id)
            video = self._videos[video_id]
            cursor = item["step_cursor"]
            next_step = None
            if item["state"] == "pending" and cursor < len(STEP_SEQUENCE):
                step, dim = STEP_SEQUENCE[cursor]
                next_step = step if dim is None else f"{step}:{dim}"
            view = {
                "video_id": video_id,
                "state": item["state"],
                "assigned_to": item["assigned_to"],
                "step_cursor": cursor,
                "next_step": next_step,
                "draft": json.loads(json.dumps(item["draft"])),
                "video": {
                    "title": video.title,
                    "user_tags": list(video.user_tags),
                    "duration_s": video.duration_s,
                },
            }
            if self._media_url_template is not None:
                view["video"]["media_url"] = self._media_url_template.format(id=video_id)
            return view

    def export(self) -> tuple[list[GroundTruth], dict[str, Any]]:
        """Reviewed records in deterministic video-id order, plus a trailer
        with per-dimension vocabulary sizes."""
        with self._lock:
            records: list[GroundTruth] = []
            for vid in sorted(self._items):
                item = self._items[vid]
                if item["state"] != "reviewed":
                    continue
                records.append(self._ground_truth(item))
            vocab: dict[str, dict[str, int]] = {}
            for lang in ("zh", "en"):
                vocab[lang] = {}
                for dim in GT_DIMENSIONS:
                    distinct = {label for rec in records
                                for label in rec.labels[dim].get(lang, ())}
                    vocab[lang][dim] = len(distinct)
            trailer = {"reviewed": len(records), "vocab_sizes": vocab}
            return records, trailer

    def _ground_truth(self, item: Mapping[str, Any]) -> GroundTruth:
        draft = item["draft"]
        translations = draft.get("translations") or {}
        captions = {"zh": draft["caption"]}
        if translations.get("caption"):
            captions["en"] = translations["caption"]
        labels: dict[str, dict[str, tuple[str, ...]]] = {}
        for dim in GT_DIMENSIONS:
            per_lang = {"zh": tuple(draft["labels"][dim])}
            en = translations.get("labels", {}).get(dim)
            if en:
                per_lang["en"] = tuple(en)
            labels[dim] = per_lang
        return GroundTruth(video_id=item["video_id"],
                           title_relevant=bool(draft["title_relevant"]),
                           captions=captions, labels=labels)

    def stats(self) -> dict[str, Any]:
        with self._lock:
            now = self._clock()
            states = {state: 0 for state in ITEM_STATES}
            active = 0
            for item in self._items.values():
                states[item["state"]] += 1
                if item["state"] == "pending" and self._claim_active(item, now):
                    active += 1
            return {
                "total": len(self._items),
                "states": states,
                "claimed_active": active,
                "events": self._seq_base + len(self._events),
                "recent_labels": {dim: list(reversed(labels))
                                  for dim, labels in self._recent_labels.items()},
            }

    def events(self) -> tuple[AnnotationEvent, ...]:
        with self._lock:
            return tuple(self._events)

    def dump_state(self) -> dict[str, Any]:
        """Canonical JSON-able view of all item state, for replay comparison
        and snapshots."""
        with self._lock:
            return json.loads(json.dumps(
                {vid: self._items[vid] for vid in sorted(self._items)}))

    # -------------------------------------------------------------- snapshots

    def save_snapshot(self, path: str | Path) -> None:
        payload = {
            "seq": self._seq_base + len(self._events),
            "items": self.dump_state(),
            "recent_labels": self._recent_labels,
        }
        Path(path).write_text(canonical_json(payload) + "\n", encoding="utf-8")

    def _load_snapshot(self, path: Path) -> int:
        payload = json.loads(path.read_text(encoding="utf-8"))
        for vid, item in payload["items"].items():
            if vid in self._items:
                self._items[vid] = item
        self._recent_labels = {dim: list(labels)
                               for dim, labels in payload["recent_labels"].items()}
        return int(payload["seq"])


# ---------------------------------------------------------------------------
# HTTP layer

class StepRequest(BaseModel):
    annotator: str
    step: str
    payload: dict = Field(default_factory=dict)


class ReviewRequest(BaseModel):
    reviewer: str
    fixes: dict = Field(default_factory=dict)
    translations: dict = Field(default_factory=dict)


class RenewRequest(BaseModel):
    annotator: str


def create_app(store: AnnotationStore, ui_dir: Optional[str | Path] = None) -> FastAPI:
    """FastAPI adapter over the store; 409 for claim/order violations,
    404 for unknown videos."""
    app = FastAPI(title="annotation service")
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])

    def guard(fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=f"unknown video {exc.args[0]!r}")
        except WorkflowError as exc:
            raise HTTPException(status_code=409, detail=str(exc))

    @app.get("/api/queue/next")
    def queue_next(annotator: str):
        item = store.next_item(annotator)
        if item is None:
            return Response(status_code=204)
        return item

    @app.post("/api/items/{video_id}/step")
    def submit_step(video_id: str, body: StepRequest):
        view, warnings = guard(store.submit_step, body.annotator, video_id,
                               body.step, body.payload)
        return {"item": view, "warnings": warnings}

    @app.post("/api/items/{video_id}/review")
    def review(video_id: str, body: ReviewRequest):
        view = guard(store.review, body.reviewer, video_id,
                     body.fixes, body.translations)
        return {"item": view, "warnings": []}

    @app.post("/api/items/{video_id}/renew")
    def renew(video_id: str, body: RenewRequest):
        return guard(store.renew, body.annotator, video_id)

    @app.get("/api/items/{video_id}")
    def get_item(video_id: str):
        return guard(store.item_view, video_id)

    @app.get("/api/export")
    def export():
        records, trailer = store.export()

        def lines():
            for record in records:
                yield canonical_json(record.to_dict()) + "\n"
            yield canonical_json({"summary": trailer}) + "\n"

        return StreamingResponse(lines(), media_type="application/x-ndjson")

    @app.get("/api/stats")
    def stats():
        return store.stats()

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
