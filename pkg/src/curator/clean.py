"""Four-stage automated cleaning: empty-title, face-only, text-heavy, content-less.

Stage order is fixed and short-circuiting: a video removed by an earlier
stage is never evaluated by later ones, so `category` records the first
failing stage. The kept-set itself is order-independent because the four
removal predicates don't interact.

All "exceeds" / "over" / "more than" comparisons are strict (>); the
confidence cutoffs of the content-less stage are inclusive (>=).
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

from .ingest import SidecarBundle
from .model import (
    DIMENSIONS,
    CleaningVerdict,
    CorpusError,
    FrameRecord,
    LabelScoreSet,
    TitleTokenization,
    Token,
    VideoRecord,
    canonical_json,
    is_han,
)

# Slang and mental-verb terms that recur in titles while saying nothing about
# the video content; extensible via CleanConfig.stopword_path.
DEFAULT_STOPWORDS = frozenset({
    "名场面",
    "打卡挑战",
    "跟着UP主创作吧",
    "觉得",
    "知道",
    "建议",
})

@dataclass(frozen=True)
class CleanConfig:
    face_area_ratio: float = 0.5
    frame_fraction: float = 0.75
    mosaic_face_threshold: int = 8
    ocr_char_threshold: int = 50
    high_pct: float = 75.0
    mid_pct: float = 50.0
    stopword_path: Optional[str] = None
    char_filter: str = "keep_han_ascii"

    def __post_init__(self) -> None:
        if not 0 < self.face_area_ratio < 1:
            raise CorpusError("face_area_ratio must be in (0, 1)")
        if not 0 < self.frame_fraction < 1:
            raise CorpusError("frame_fraction must be in (0, 1)")
        if self.mosaic_face_threshold <= 0 or self.ocr_char_threshold <= 0:
            raise CorpusError("thresholds must be positive")
        if not 0 < self.mid_pct <= self.high_pct < 100:
            raise CorpusError("need 0 < mid_pct <= high_pct < 100")
        if self.char_filter not in ("keep_han_ascii", "off"):
            raise CorpusError(f"unknown char_filter {self.char_filter!r}")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def load_stopwords(path: Optional[str | Path] = None) -> frozenset[str]:
    """Bundled stopword list, optionally extended by one term per line."""
    words = set(DEFAULT_STOPWORDS)
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            words.update(line.strip() for line in fh if line.strip())
    return frozenset(words)


def _keeps_char_filter(surface: str) -> bool:
    # Keeps Han ideographs + ASCII alphanumerics; kana, hangul, punctuation
    # and emoticons fall outside and are dropped. Han-range Japanese kanji
    # can't be told apart and are kept (known approximation).
    return any(is_han(ch) or (ch.isascii() and ch.isalnum()) for ch in surface)


def filter_title(tokens: TitleTokenization, stopwords: Iterable[str] = DEFAULT_STOPWORDS,
                 char_filter: str = "keep_han_ascii") -> tuple[bool, tuple[Token, ...]]:
    """Drop stopwords / mental verbs / non-content scripts, then look for a
    verb-noun phrase among the survivors.

    Returns (is_empty, surviving_tokens): is_empty means no pattern matched
    and the title tells nothing about the content.
    """
    stopset = set(stopwords)
    survivors: list[tuple[int, Token]] = []
    for idx, tok in enumerate(tokens.tokens):
        if tok.surface in stopset:
            continue
        if tok.pos == "mental_verb":
            continue
        if char_filter == "keep_han_ascii" and not _keeps_char_filter(tok.surface):
            continue
        survivors.append((idx, tok))
    matched = _find_vnp(tokens.tokens, survivors)
    return matched is None, tuple(tok for _, tok in survivors)


def _find_vnp(all_tokens: Sequence[Token],
              survivors: Sequence[tuple[int, Token]]) -> Optional[str]:
    """Return the name of the first verb-noun-phrase pattern matched, if any.

    Arc-based patterns apply when the parse carries dependency arcs; a
    tokenization without any arcs falls back to surface adjacency
    (verb immediately followed by noun among the survivors).
    """
    alive = {idx for idx, _ in survivors}
    arcs_present = any(tok.relation is not None for tok in all_tokens)

    if arcs_present:
        # (a) verb-object arc
        for idx, tok in survivors:
            if tok.relation == "verb_object" and tok.head is not None and tok.head in alive:
                return "verb_object"
        # (b) modifier-head arc whose head is a noun (nominal phrase)
        for idx, tok in survivors:
            if (tok.relation == "modifier_head" and tok.head is not None
                    and tok.head in alive and all_tokens[tok.head].pos == "noun"):
                return "modifier_head"
        # (c) subject-verb arc whose verb also heads a verb-object arc (SVO)
        vo_heads = {tok.head for idx, tok in survivors
                    if tok.relation == "verb_object" and tok.head is not None and tok.head in alive}
        for idx, tok in survivors:
            if (tok.relation == "subject_verb" and tok.head is not None
                    and tok.head in alive and tok.head in vo_heads):
                return "subject_verb_object"
        return None

    for (_, tok), (_, nxt) in zip(survivors, survivors[1:]):
        if tok.pos == "verb" and nxt.pos == "noun":
            return "verb_object"
    return None


def classify_face_frame(frame: FrameRecord, cfg: CleanConfig = CleanConfig()) -> str:
    """A frame is talking-head iff some face box covers > face_area_ratio of it."""
    area = frame.frame_w * frame.frame_h
    for _, _, w, h in frame.face_boxes:
        if w * h / area > cfg.face_area_ratio:
            return "talking_head"
    return "normal"


def classify_face_video(frames: Sequence[FrameRecord],
                        cfg: CleanConfig = CleanConfig()
                        ) -> tuple[bool, Optional[str], dict[str, Any]]:
    """Decide whether a video is face-only, and which pattern it shows.

    Talking-head (dominant face in more than frame_fraction of the frames)
    is checked before face-mosaic (max per-frame face count above the
    mosaic threshold); a video matching both is reported as talking-head.
    """
    if not frames:
        return False, None, {"face_stage": "unscored"}
    talking = sum(1 for f in frames if classify_face_frame(f, cfg) == "talking_head")
    fraction = talking / len(frames)
    max_faces = max(len(f.face_boxes) for f in frames)
    evidence = {
        "talking_head_fraction": fraction,
        "max_faces_per_frame": max_faces,
        "frame_count": len(frames),
    }
    if fraction > cfg.frame_fraction:
        return True, "talking_head", evidence
    if max_faces > cfg.mosaic_face_threshold:
        return True, "face_mosaic", evidence
    return False, None, evidence


def classify_text_heavy(frames: Sequence[FrameRecord],
                        cfg: CleanConfig = CleanConfig()) -> tuple[bool, float]:
    """A frame is text-heavy above ocr_char_threshold characters; the video is
    text-heavy when the heavy fraction exceeds frame_fraction."""
    if not frames:
        return False, 0.0
    heavy = sum(1 for f in frames if f.ocr_char_count > cfg.ocr_char_threshold)
    fraction = heavy / len(frames)
    return fraction > cfg.frame_fraction, fraction


def _nearest_rank(sorted_values: Sequence[float], pct: float) -> float:
    """Nearest-rank percentile: value at 1-based index ceil(pct/100 * n)."""
    n = len(sorted_values)
    exact = n * pct / 100.0
    idx = round(exact) if abs(exact - round(exact)) < 1e-9 else math.ceil(exact)
    return sorted_values[min(max(idx, 1), n) - 1]


@dataclass(frozen=True)
class PercentileThresholds:
    """High/mid confidence cutoffs per (dimension, label), with a pooled
    per-dimension fallback for labels observed too rarely to trust."""

    per_label: Mapping[tuple[str, str], tuple[float, float]] = field(default_factory=dict)
    pooled: Mapping[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for key, (high, mid) in {**dict(self.per_label),
                                 **dict(self.pooled)}.items():
            if high < mid:
                raise CorpusError(f"thresholds for {key!r}: high {high} < mid {mid}")
        object.__setattr__(self, "per_label", dict(self.per_label))
        object.__setattr__(self, "pooled", dict(self.pooled))

    def thresholds_for(self, dimension: str, label: str) -> tuple[float, float]:
        try:
            return self.per_label.get((dimension, label)) or self.pooled[dimension]
        except KeyError:
            raise CorpusError(f"no thresholds for dimension {dimension!r}") from None

    def digest(self) -> str:
        payload = {
            "per_label": {f"{d}\t{l}": list(v) for (d, l), v in sorted(self.per_label.items())},
            "pooled": {d: list(v) for d, v in sorted(self.pooled.items())},
        }
        return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


def compute_percentile_thresholds(score_sets: Iterable[LabelScoreSet],
                                  cfg: CleanConfig = CleanConfig(),
                                  min_label_obs: int = 20) -> PercentileThresholds:
    """Corpus-wide scan producing the confidence cutoffs for the content-less stage.

    Labels observed at least `min_label_obs` times get their own percentile
    thresholds (this normalizes model-specific label bias); rarer labels fall
    back to the dimension-pooled distribution.
    """
    by_label: dict[tuple[str, str], list[float]] = {}
    by_dim: dict[str, list[float]] = {dim: [] for dim in DIMENSIONS}
    for score_set in score_sets:
        for label, score in score_set.scores.items():
            by_label.setdefault((score_set.dimension, label), []).append(score)
            by_dim[score_set.dimension].append(score)

    pooled: dict[str, tuple[float, float]] = {}
    for dim, values in by_dim.items():
        if not values:
            raise CorpusError(f"dimension {dim!r} has no scores in the corpus")
        values.sort()
        pooled[dim] = (_nearest_rank(values, cfg.high_pct), _nearest_rank(values, cfg.mid_pct))

    per_label: dict[tuple[str, str], tuple[float, float]] = {}
    for key, values in by_label.items():
        if len(values) >= min_label_obs:
            values.sort()
            per_label[key] = (_nearest_rank(values, cfg.high_pct),
                              _nearest_rank(values, cfg.mid_pct))
    return PercentileThresholds(per_label=per_label, pooled=pooled)


def filter_contentless(video_scores: Mapping[str, LabelScoreSet],
                       thresholds: PercentileThresholds
                       ) -> tuple[bool, dict[str, list[str]]]:
    """Emit confident labels per dimension; a video emitting nothing anywhere
    is content-less.

    Per dimension: labels at or above their high cutoff are emitted; failing
    that, labels at or above the mid cutoff are emitted only if there are at
    least two of them.
    """
    emitted: dict[str, list[str]] = {}
    for dim in DIMENSIONS:
        score_set = video_scores.get(dim)
        if score_set is None or not score_set.scores:
            emitted[dim] = []
            continue
        ordered = sorted(score_set.scores.items(), key=lambda kv: (-kv[1], kv[0]))
        high = [label for label, score in ordered
                if score >= thresholds.thresholds_for(dim, label)[0]]
        if high:
            emitted[dim] = high
            continue
        moderate = [label for label, score in ordered
                    if score >= thresholds.thresholds_for(dim, label)[1]]
        emitted[dim] = moderate if len(moderate) >= 2 else []
    is_contentless = all(not labels for labels in emitted.values())
    return is_contentless, emitted


def _clean_one(video: VideoRecord, sidecars: SidecarBundle, cfg: CleanConfig,
               stopwords: frozenset[str],
               thresholds: PercentileThresholds) -> CleaningVerdict:
    tokens = sidecars.title_tokens.get(video.id)
    if tokens is None:
        return CleaningVerdict(video.id, kept=False, category="empty_title",
                               evidence={"reason": "missing_title_tokens"})
    is_empty, surviving = filter_title(tokens, stopwords, cfg.char_filter)
    if is_empty:
        return CleaningVerdict(video.id, kept=False, category="empty_title",
                               evidence={"reason": "no_vnp",
                                         "surviving_tokens": [t.surface for t in surviving]})

    frames = sidecars.frames.get(video.id, ())
    is_face_only, kind, face_evidence = classify_face_video(frames, cfg)
    if is_face_only:
        return CleaningVerdict(video.id, kept=False, category="face_only",
                               evidence={"kind": kind, **face_evidence})

    is_text_heavy, heavy_fraction = classify_text_heavy(frames, cfg)
    if is_text_heavy:
        return CleaningVerdict(video.id, kept=False, category="text_heavy",
                               evidence={"heavy_frame_fraction": heavy_fraction,
                                         "frame_count": len(frames)})

    video_scores = sidecars.scores_for(video.id)
    is_contentless, emitted = filter_contentless(video_scores, thresholds)
    unscored = [dim for dim in DIMENSIONS if dim not in video_scores]
    if is_contentless:
        evidence: dict[str, Any] = {"emitted_labels": {}}
        if unscored:
            evidence["unscored_dimensions"] = unscored
        return CleaningVerdict(video.id, kept=False, category="content_less",
                               evidence=evidence)

    evidence = {"frame_count": len(frames), "emitted_labels": emitted}
    if frames:
        evidence["talking_head_fraction"] = face_evidence["talking_head_fraction"]
        evidence["max_faces_per_frame"] = face_evidence["max_faces_per_frame"]
        evidence["heavy_frame_fraction"] = heavy_fraction
    else:
        evidence["face_text_stages"] = "unscored"
    if unscored:
        evidence["unscored_dimensions"] = unscored
    return CleaningVerdict(video.id, kept=True, evidence=evidence)


def run_pipeline(corpus: Sequence[VideoRecord], sidecars: SidecarBundle,
                 cfg: CleanConfig = CleanConfig(), workers: int = 1
                 ) -> tuple[list[CleaningVerdict], dict[str, Any]]:
    """Clean a corpus. Phase 1 scans every score to fix the percentile
    thresholds; phase 2 judges videos independently (and in parallel when
    `workers` > 1 — verdict order always follows corpus order)."""
    stopwords = load_stopwords(cfg.stopword_path)
    thresholds = compute_percentile_thresholds(sidecars.label_scores.values(), cfg)

    def judge(video: VideoRecord) -> CleaningVerdict:
        return _clean_one(video, sidecars, cfg, stopwords, thresholds)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            verdicts = list(pool.map(judge, corpus))
    else:
        verdicts = [judge(video) for video in corpus]

    removed = {category: 0 for category in
               ("empty_title", "face_only", "text_heavy", "content_less")}
    for verdict in verdicts:
        if not verdict.kept:
            removed[verdict.category] += 1
    summary = {
        "input": len(corpus),
        "kept": sum(1 for v in verdicts if v.kept),
        "removed": removed,
        "config": cfg.to_dict(),
        "thresholds_digest": thresholds.digest(),
    }
    return verdicts, summary
