"""Shared synthetic-corpus builders for the test suite.

The planted corpus has 200 videos: 120 clean plus 20 per removal category,
each planted video violating exactly one stage and clearing the others, so
the pipeline must land on 100% precision and recall per category.
"""

from __future__ import annotations

from curator.ingest import SidecarBundle
from curator.model import (
    DIMENSIONS,
    FeatureVector,
    FrameRecord,
    LabelScoreSet,
    TitleTokenization,
    Token,
    VideoRecord,
)

HIGH_SCORE = 0.9
LOW_SCORE = 0.05

# one confident label per dimension keeps the percentile math transparent
DIM_LABELS = {"object": "thing", "action": "move", "scene": "place"}


def vnp_tokens(vid: str, variant: int = 0) -> TitleTokenization:
    """Titles that clear the empty-title stage, over a few pattern shapes."""
    variants = (
        # verb-object arc
        (Token("吃", "verb"), Token("火锅", "noun", head=0, relation="verb_object")),
        # modifier-head arc with a noun head
        (Token("可爱", "adjective", head=1, relation="modifier_head"), Token("猫咪", "noun")),
        # subject-verb-object
        (Token("猫", "noun", head=1, relation="subject_verb"), Token("追", "verb"),
         Token("激光", "noun", head=1, relation="verb_object")),
        # no arcs at all: adjacency fallback
        (Token("跳", "verb"), Token("舞", "noun")),
    )
    return TitleTokenization(video_id=vid, tokens=variants[variant % len(variants)])


def empty_tokens(vid: str, variant: int = 0) -> TitleTokenization:
    """Titles the empty-title stage must reject."""
    variants = (
        (Token("名场面", "noun"),),                                # stopword only
        (Token("觉得", "mental_verb"), Token("好", "adjective")),   # mental verb + filler
        (Token("猫", "noun"), Token("狗", "noun")),                 # tokens but no VNP
    )
    return TitleTokenization(video_id=vid, tokens=variants[variant % len(variants)])


def make_frames(vid: str, n: int = 8, ocr: int = 5, ocr_heavy_frames: int = 0,
                talking_frames: int = 0, mosaic_faces: int = 0) -> tuple[FrameRecord, ...]:
    frames = []
    for i in range(n):
        boxes: list[tuple[int, int, int, int]] = []
        if i < talking_frames:
            boxes.append((0, 0, 80, 80))  # 64% of a 100x100 frame
        if i == 0 and mosaic_faces:
            boxes.extend((10 * j, 0, 10, 10) for j in range(mosaic_faces))
        frames.append(FrameRecord(
            video_id=vid, frame_index=i, frame_w=100, frame_h=100,
            face_boxes=tuple(boxes),
            ocr_char_count=60 if i < ocr_heavy_frames else ocr))
    return tuple(frames)


def make_scores(vid: str, score: float) -> dict[tuple[str, str], LabelScoreSet]:
    return {(vid, dim): LabelScoreSet(video_id=vid, dimension=dim,
                                      scores={DIM_LABELS[dim]: score})
            for dim in DIMENSIONS}


def build_planted_corpus(with_features: bool = False
                         ) -> tuple[list[VideoRecord], SidecarBundle, dict[str, str | None]]:
    """Returns (records, sidecars, expected) with expected[id] the removal
    category or None for kept videos."""
    records: list[VideoRecord] = []
    frames: dict[str, tuple[FrameRecord, ...]] = {}
    scores: dict[tuple[str, str], LabelScoreSet] = {}
    tokens: dict[str, TitleTokenization] = {}
    features: dict[str, FeatureVector] = {}
    expected: dict[str, str | None] = {}

    def add(vid: str, category: str | None, *, title_ok: bool = True,
            title_variant: int = 0, score: float = HIGH_SCORE, **frame_kw) -> None:
        records.append(VideoRecord(
            id=vid, duration_s=20.0 + (len(records) % 40), file_size_bytes=1_000_000,
            title=f"title {vid}", user_tags=("猫", f"tag{len(records) % 7}")))
        tokens[vid] = (vnp_tokens(vid, title_variant) if title_ok
                       else empty_tokens(vid, title_variant))
        frames[vid] = make_frames(vid, **frame_kw)
        scores.update(make_scores(vid, score))
        if with_features:
            angle = len(records)
            features[vid] = FeatureVector(vid, (1.0 + angle % 5, float(angle % 11), 1.0))
        expected[vid] = category

    for i in range(120):
        # c000..c009 carry mid-band OCR counts (30): clean at the default
        # threshold of 50, text-heavy once the threshold drops below 30
        ocr = 30 if i < 10 else 5
        add(f"c{i:03d}", None, title_variant=i, ocr=ocr,
            ocr_heavy_frames=0, talking_frames=i % 3, mosaic_faces=0)
    for i in range(20):
        add(f"et{i:03d}", "empty_title", title_ok=False, title_variant=i)
    for i in range(20):
        if i < 10:
            add(f"fo{i:03d}", "face_only", talking_frames=7)   # 7/8 > 0.75
        else:
            add(f"fo{i:03d}", "face_only", mosaic_faces=9)     # 9 > 8
    for i in range(20):
        add(f"th{i:03d}", "text_heavy", ocr_heavy_frames=7)    # 7/8 > 0.75
    for i in range(20):
        add(f"cl{i:03d}", "content_less", score=LOW_SCORE)

    bundle = SidecarBundle(frames=frames, label_scores=scores,
                           title_tokens=tokens, features=features)
    return records, bundle, expected
