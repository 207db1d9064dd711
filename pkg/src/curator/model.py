"""Shared domain types for the curation engine.

Every type is an immutable value object that validates its own fields on
construction; corpus-level rules (id uniqueness, sidecar coverage) are
checked by :func:`validate_corpus`, which reports problems instead of
raising so a whole corpus can be audited in one pass.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Mapping, Optional, Sequence

import numpy as np

if TYPE_CHECKING:
    from .ingest import SidecarBundle

DIMENSIONS = ("object", "action", "scene")
GT_DIMENSIONS = ("object", "action", "scene", "user_tag")
LANGUAGES = ("zh", "en")
POS_TAGS = ("verb", "noun", "adjective", "mental_verb", "other")
RELATIONS = ("verb_object", "modifier_head", "subject_verb", "other")
CLEAN_CATEGORIES = ("empty_title", "face_only", "text_heavy", "content_less")


class CorpusError(ValueError):
    """A domain rule was violated (bad field, bad file, bad cross-reference)."""


def canonical_json(obj: Any) -> str:
    """Serialize to the canonical single-line form used by every file format."""
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(", ", ": "))


# Han ranges cover basic + extension A + compatibility + the astral extensions.
_HAN_RANGES = ((0x3400, 0x4DBF), (0x4E00, 0x9FFF), (0xF900, 0xFAFF), (0x20000, 0x2FA1F))


def is_han(ch: str) -> bool:
    """True for Han ideographs (kana, hangul, punctuation, emoji are not Han)."""
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _HAN_RANGES)


@dataclass(frozen=True)
class VideoRecord:
    """One video's crawled metadata (no pixels, ever)."""

    id: str
    duration_s: float
    file_size_bytes: int
    title: str
    user_tags: tuple[str, ...] = ()
    description: Optional[str] = None
    channel: Optional[str] = None
    upload_ts: Optional[int] = None
    auto_caption: Optional[str] = None

    def __post_init__(self) -> None:
        if not isinstance(self.id, str) or not self.id:
            raise CorpusError("video id must be a nonempty string")
        if self.duration_s < 0:
            raise CorpusError(f"video {self.id}: duration_s must be nonnegative")
        if self.file_size_bytes < 0:
            raise CorpusError(f"video {self.id}: file_size_bytes must be nonnegative")
        object.__setattr__(self, "user_tags", tuple(self.user_tags))

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "id": self.id,
            "duration_s": self.duration_s,
            "file_size_bytes": self.file_size_bytes,
            "title": self.title,
            "user_tags": list(self.user_tags),
        }
        for key in ("description", "channel", "upload_ts", "auto_caption"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "VideoRecord":
        for key in ("id", "duration_s", "file_size_bytes", "title", "user_tags"):
            if key not in data:
                raise CorpusError(f"missing field {key}")
        return cls(
            id=data["id"],
            duration_s=float(data["duration_s"]),
            file_size_bytes=int(data["file_size_bytes"]),
            title=data["title"],
            user_tags=tuple(data["user_tags"]),
            description=data.get("description"),
            channel=data.get("channel"),
            upload_ts=data.get("upload_ts"),
            auto_caption=data.get("auto_caption"),
        )


@dataclass(frozen=True)
class FrameRecord:
    """One sampled frame's detector outputs: face boxes and an OCR character count."""

    video_id: str
    frame_index: int
    frame_w: int
    frame_h: int
    face_boxes: tuple[tuple[float, float, float, float], ...] = ()
    ocr_char_count: int = 0

    def __post_init__(self) -> None:
        if self.frame_index < 0:
            raise CorpusError(f"video {self.video_id}: frame_index must be nonnegative")
        if self.frame_w <= 0 or self.frame_h <= 0:
            raise CorpusError(f"video {self.video_id}: frame dimensions must be positive")
        if self.ocr_char_count < 0:
            raise CorpusError(f"video {self.video_id}: ocr_char_count must be nonnegative")
        boxes = tuple(tuple(float(v) for v in box) for box in self.face_boxes)
        for box in boxes:
            if len(box) != 4:
                raise CorpusError(f"video {self.video_id}: face box must be (x, y, w, h)")
            x, y, w, h = box
            if w < 0 or h < 0 or x < 0 or y < 0 or x + w > self.frame_w or y + h > self.frame_h:
                raise CorpusError(
                    f"video {self.video_id} frame {self.frame_index}: "
                    f"face box {box} outside {self.frame_w}x{self.frame_h} frame"
                )
        object.__setattr__(self, "face_boxes", boxes)

    def to_dict(self) -> dict[str, Any]:
        return {
            "video_id": self.video_id,
            "frame_index": self.frame_index,
            "frame_w": self.frame_w,
            "frame_h": self.frame_h,
            "face_boxes": [list(b) for b in self.face_boxes],
            "ocr_char_count": self.ocr_char_count,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "FrameRecord":
        for key in ("video_id", "frame_index", "frame_w", "frame_h", "face_boxes", "ocr_char_count"):
            if key not in data:
                raise CorpusError(f"missing field {key}")
        return cls(
            video_id=data["video_id"],
            frame_index=int(data["frame_index"]),
            frame_w=int(data["frame_w"]),
            frame_h=int(data["frame_h"]),
            face_boxes=tuple(tuple(b) for b in data["face_boxes"]),
            ocr_char_count=int(data["ocr_char_count"]),
        )


@dataclass(frozen=True)
class LabelScoreSet:
    """Recognition-model confidence per label, for one video and one dimension.

    Scores are untyped nonnegative reals: upstream models mix softmax outputs
    and similarity scores, and the percentile thresholding downstream makes
    the absolute scale irrelevant.
    """

    video_id: str
    dimension: str
    scores: Mapping[str, float]

    def __post_init__(self) -> None:
        if self.dimension not in DIMENSIONS:
            raise CorpusError(f"unknown dimension {self.dimension!r}")
        scores = dict(self.scores)
        for label, score in scores.items():
            if not label:
                raise CorpusError(f"video {self.video_id}: empty label in {self.dimension} scores")
            if score < 0:
                raise CorpusError(f"video {self.video_id}: negative score for {label!r}")
        object.__setattr__(self, "scores", scores)

    def to_dict(self) -> dict[str, Any]:
        return {"video_id": self.video_id, "scores": dict(self.scores)}


@dataclass(frozen=True)
class FeatureVector:
    """Video-level embedding used for neighbor retrieval."""

    video_id: str
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        values = tuple(float(v) for v in self.values)
        if not values:
            raise CorpusError(f"video {self.video_id}: empty feature vector")
        if all(v == 0.0 for v in values):
            raise CorpusError(f"video {self.video_id}: all-zero feature vector")
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return len(self.values)

    def to_dict(self) -> dict[str, Any]:
        return {"video_id": self.video_id, "values": list(self.values)}


@dataclass(frozen=True)
class Token:
    """One parsed title token: surface form, POS class, optional dependency arc."""

    surface: str
    pos: str
    head: Optional[int] = None
    relation: Optional[str] = None

    def __post_init__(self) -> None:
        if self.pos not in POS_TAGS:
            raise CorpusError(f"unknown pos tag {self.pos!r}")
        if self.relation is not None and self.relation not in RELATIONS:
            raise CorpusError(f"unknown relation {self.relation!r}")

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"surface": self.surface, "pos": self.pos}
        if self.head is not None:
            out["head"] = self.head
        if self.relation is not None:
            out["relation"] = self.relation
        return out


@dataclass(frozen=True)
class TitleTokenization:
    """Dependency-parsed title, ingested from an upstream parser's output."""

    video_id: str
    tokens: tuple[Token, ...]

    def __post_init__(self) -> None:
        tokens = tuple(
            t if isinstance(t, Token) else Token(**t) for t in self.tokens
        )
        for i, tok in enumerate(tokens):
            if tok.head is not None:
                if tok.head < 0 or tok.head >= len(tokens):
                    raise CorpusError(
                        f"video {self.video_id}: token {i} head {tok.head} out of range"
                    )
                if tok.head == i:
                    raise CorpusError(f"video {self.video_id}: token {i} is its own head")
        object.__setattr__(self, "tokens", tokens)

    def to_dict(self) -> dict[str, Any]:
        return {"video_id": self.video_id, "tokens": [t.to_dict() for t in self.tokens]}


@dataclass(frozen=True)
class CleaningVerdict:
    """Keep/remove decision for one video with the measurements behind it."""

    video_id: str
    kept: bool
    category: Optional[str] = None
    evidence: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kept != (self.category is None):
            raise CorpusError(f"video {self.video_id}: kept must mean no removal category")
        if self.category is not None and self.category not in CLEAN_CATEGORIES:
            raise CorpusError(f"unknown cleaning category {self.category!r}")
        object.__setattr__(self, "evidence", dict(self.evidence))

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"video_id": self.video_id, "kept": self.kept}
        if self.category is not None:
            out["category"] = self.category
        out["evidence"] = dict(self.evidence)
        return out


@dataclass(frozen=True)
class GroundTruth:
    """A finalized, reviewed annotation record.

    Constructing one asserts the completeness rule: a Chinese label in every
    dimension (records failing it are discarded during annotation and never
    become ground truth).
    """

    video_id: str
    title_relevant: bool
    captions: Mapping[str, str]
    labels: Mapping[str, Mapping[str, tuple[str, ...]]]

    def __post_init__(self) -> None:
        captions = dict(self.captions)
        if "zh" not in captions or not captions["zh"]:
            raise CorpusError(f"video {self.video_id}: ground truth needs a zh caption")
        for lang in captions:
            if lang not in LANGUAGES:
                raise CorpusError(f"unknown caption language {lang!r}")
        labels: dict[str, dict[str, tuple[str, ...]]] = {}
        for dim in GT_DIMENSIONS:
            per_lang = dict(self.labels.get(dim, {}))
            for lang in per_lang:
                if lang not in LANGUAGES:
                    raise CorpusError(f"unknown label language {lang!r}")
            if not per_lang.get("zh"):
                raise CorpusError(
                    f"video {self.video_id}: dimension {dim!r} has no zh labels"
                )
            labels[dim] = {lang: tuple(vals) for lang, vals in per_lang.items()}
        object.__setattr__(self, "captions", captions)
        object.__setattr__(self, "labels", labels)

    def to_dict(self) -> dict[str, Any]:
        return {
            "video_id": self.video_id,
            "title_relevant": self.title_relevant,
            "captions": dict(self.captions),
            "labels": {dim: {lang: list(vals) for lang, vals in per.items()}
                       for dim, per in self.labels.items()},
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "GroundTruth":
        for key in ("video_id", "title_relevant", "captions", "labels"):
            if key not in data:
                raise CorpusError(f"missing field {key}")
        return cls(
            video_id=data["video_id"],
            title_relevant=bool(data["title_relevant"]),
            captions=dict(data["captions"]),
            labels={dim: {lang: tuple(v) for lang, v in per.items()}
                    for dim, per in data["labels"].items()},
        )


@dataclass(frozen=True)
class RankedPrediction:
    """A scored ranking over items, canonicalized to descending score with
    lexicographic tie-break so every consumer sees the same order."""

    subject_id: str
    ranking: tuple[tuple[str, float], ...]

    def __post_init__(self) -> None:
        items = [(str(item), float(score)) for item, score in self.ranking]
        seen = set()
        for item, _ in items:
            if item in seen:
                raise CorpusError(f"{self.subject_id}: duplicate ranked item {item!r}")
            seen.add(item)
        items.sort(key=lambda pair: (-pair[1], pair[0]))
        object.__setattr__(self, "ranking", tuple(items))

    def items(self) -> tuple[str, ...]:
        return tuple(item for item, _ in self.ranking)

    def to_dict(self) -> dict[str, Any]:
        return {"subject_id": self.subject_id,
                "ranking": [[item, score] for item, score in self.ranking]}


@dataclass(frozen=True)
class TokenGrid:
    """Per-frame visual tokens: k frames x (p patch tokens + the index-0
    classification token) x d embedding width."""

    k: int
    p: int
    d: int
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.k < 1 or self.p < 1 or self.d < 1:
            raise CorpusError("token grid needs k, p, d >= 1")
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.k, self.p + 1, self.d):
            raise CorpusError(
                f"token grid values must be shaped {(self.k, self.p + 1, self.d)}, "
                f"got {values.shape}"
            )
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TokenGrid":
        return cls(k=int(data["k"]), p=int(data["p"]), d=int(data["d"]),
                   values=np.asarray(data["values"], dtype=np.float64))


@dataclass(frozen=True)
class ValidationIssue:
    kind: str
    message: str
    video_id: Optional[str] = None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind, "message": self.message}
        if self.video_id is not None:
            out["video_id"] = self.video_id
        return out


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple[ValidationIssue, ...]

    @property
    def ok(self) -> bool:
        return not self.issues

    def of_kind(self, kind: str) -> list[ValidationIssue]:
        return [issue for issue in self.issues if issue.kind == kind]

    def to_dict(self) -> dict[str, Any]:
        return {"ok": self.ok, "issues": [i.to_dict() for i in self.issues]}


def validate_corpus(records: Sequence[VideoRecord], sidecars: "SidecarBundle") -> ValidationReport:
    """Audit a corpus + sidecar bundle without mutating either.

    Flags duplicate ids, constraint violations the constructors cannot see
    (they are corpus-level), and every video missing a sidecar that some
    downstream stage requires, with a note on how that stage will treat it.
    """
    issues: list[ValidationIssue] = []
    seen: set[str] = set()
    for rec in records:
        if rec.id in seen:
            issues.append(ValidationIssue("duplicate_id", f"duplicate video id {rec.id!r}", rec.id))
        seen.add(rec.id)
        if rec.duration_s <= 0:
            issues.append(ValidationIssue(
                "nonpositive_duration", f"video {rec.id}: nonpositive duration {rec.duration_s}", rec.id))

    known = {rec.id for rec in records}
    for name, referenced in (
        ("frames", set(sidecars.frames)),
        ("label_scores", {vid for vid, _ in sidecars.label_scores}),
        ("features", set(sidecars.features)),
        ("title_tokens", set(sidecars.title_tokens)),
    ):
        for vid in sorted(referenced - known):
            issues.append(ValidationIssue(
                "unknown_video", f"{name} sidecar references unknown video {vid!r}", vid))

    for rec in records:
        if rec.id not in sidecars.title_tokens:
            issues.append(ValidationIssue(
                "missing_title_tokens",
                f"video {rec.id}: no title tokenization; "
                "empty-title stage will skip (treated as missing-title removal)",
                rec.id))
        if rec.id not in sidecars.frames:
            issues.append(ValidationIssue(
                "missing_frames",
                f"video {rec.id}: no frames; face/text stages pass it unscored",
                rec.id))
        missing_dims = [d for d in DIMENSIONS if (rec.id, d) not in sidecars.label_scores]
        if missing_dims:
            issues.append(ValidationIssue(
                "missing_label_scores",
                f"video {rec.id}: no scores for {', '.join(missing_dims)}; "
                "those dimensions emit nothing in the content-less stage",
                rec.id))
        if rec.id not in sidecars.features:
            issues.append(ValidationIssue(
                "missing_features",
                f"video {rec.id}: no feature vector; preselection cannot vote on it",
                rec.id))

    for vid, frames in sidecars.frames.items():
        indices = [f.frame_index for f in frames]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            issues.append(ValidationIssue(
                "frame_order", f"video {vid}: frame_index not strictly increasing", vid))

    dims = {fv.dim for fv in sidecars.features.values()}
    if len(dims) > 1:
        issues.append(ValidationIssue(
            "feature_dim_mismatch",
            f"feature vectors disagree on dimensionality: {sorted(dims)}"))

    for (source, target), sim in sidecars.similarity.items():
        if not 0.0 <= sim <= 1.0:
            issues.append(ValidationIssue(
                "similarity_range", f"similarity({source!r}, {target!r}) = {sim} out of [0, 1]"))

    return ValidationReport(issues=tuple(issues))
