"""Loading and saving the corpus manifest and sidecar annotation files.

Everything is line-delimited JSON (one object per line, UTF-8) so corpora
of hundreds of thousands of videos stream without full materialization.
Sidecar files are the precomputed outputs of upstream models (face
detector, OCR, recognition nets, parser, embedding model); this engine
never runs any of those itself.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Mapping, Optional, Sequence

from .model import (
    DIMENSIONS,
    CorpusError,
    FeatureVector,
    FrameRecord,
    LabelScoreSet,
    TitleTokenization,
    Token,
    VideoRecord,
    canonical_json,
)

SIDECAR_FILES = {
    "frames": "frames.jsonl",
    "features": "features.jsonl",
    "title_tokens": "title_tokens.jsonl",
    "label_sim": "label_sim.jsonl",
}


def iter_jsonl(path: Path) -> Iterator[tuple[int, dict[str, Any]]]:
    """Yield (line_number, parsed_object) pairs; blank lines are skipped."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path.name} line {lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise CorpusError(f"{path.name} line {lineno}: expected an object")
            yield lineno, obj


def write_jsonl(path: Path, rows: Sequence[Mapping[str, Any]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(canonical_json(row) + "\n")


@dataclass(frozen=True)
class SidecarBundle:
    """All per-video model outputs, keyed for O(1) lookup by the pipeline."""

    frames: Mapping[str, tuple[FrameRecord, ...]] = field(default_factory=dict)
    label_scores: Mapping[tuple[str, str], LabelScoreSet] = field(default_factory=dict)
    features: Mapping[str, FeatureVector] = field(default_factory=dict)
    title_tokens: Mapping[str, TitleTokenization] = field(default_factory=dict)
    similarity: Mapping[tuple[str, str], float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "frames", dict(self.frames))
        object.__setattr__(self, "label_scores", dict(self.label_scores))
        object.__setattr__(self, "features", dict(self.features))
        object.__setattr__(self, "title_tokens", dict(self.title_tokens))
        object.__setattr__(self, "similarity", dict(self.similarity))

    def scores_for(self, video_id: str) -> dict[str, LabelScoreSet]:
        return {dim: self.label_scores[(video_id, dim)]
                for dim in DIMENSIONS if (video_id, dim) in self.label_scores}


def load_manifest(path: str | os.PathLike) -> list[VideoRecord]:
    """Load manifest.jsonl into VideoRecords, preserving line order."""
    path = Path(path)
    records: list[VideoRecord] = []
    seen: set[str] = set()
    for lineno, obj in iter_jsonl(path):
        try:
            rec = VideoRecord.from_dict(obj)
        except CorpusError as exc:
            raise CorpusError(f"line {lineno}: {exc}") from exc
        if rec.id in seen:
            raise CorpusError(f"line {lineno}: duplicate video id {rec.id!r}")
        seen.add(rec.id)
        records.append(rec)
    return records


def save_manifest(records: Sequence[VideoRecord], path: str | os.PathLike) -> None:
    write_jsonl(Path(path), [rec.to_dict() for rec in records])


def _load_frames(path: Path, known: set[str]) -> dict[str, tuple[FrameRecord, ...]]:
    grouped: dict[str, list[FrameRecord]] = {}
    for lineno, obj in iter_jsonl(path):
        try:
            frame = FrameRecord.from_dict(obj)
        except CorpusError as exc:
            raise CorpusError(f"{path.name} line {lineno}: {exc}") from exc
        if frame.video_id not in known:
            raise CorpusError(
                f"{path.name} line {lineno}: unknown video {frame.video_id!r}")
        frames = grouped.setdefault(frame.video_id, [])
        if frames and frame.frame_index <= frames[-1].frame_index:
            raise CorpusError(
                f"{path.name} line {lineno}: video {frame.video_id} "
                f"frame_index {frame.frame_index} not strictly increasing")
        frames.append(frame)
    return {vid: tuple(frames) for vid, frames in grouped.items()}


def _load_label_scores(path: Path, dimension: str,
                       known: set[str]) -> dict[tuple[str, str], LabelScoreSet]:
    out: dict[tuple[str, str], LabelScoreSet] = {}
    for lineno, obj in iter_jsonl(path):
        for key in ("video_id", "scores"):
            if key not in obj:
                raise CorpusError(f"{path.name} line {lineno}: missing field {key}")
        vid = obj["video_id"]
        if vid not in known:
            raise CorpusError(f"{path.name} line {lineno}: unknown video {vid!r}")
        if (vid, dimension) in out:
            raise CorpusError(f"{path.name} line {lineno}: duplicate scores for {vid!r}")
        try:
            out[(vid, dimension)] = LabelScoreSet(
                video_id=vid, dimension=dimension,
                scores={str(k): float(v) for k, v in obj["scores"].items()})
        except CorpusError as exc:
            raise CorpusError(f"{path.name} line {lineno}: {exc}") from exc
    return out


def _load_features(path: Path, known: set[str]) -> dict[str, FeatureVector]:
    out: dict[str, FeatureVector] = {}
    dim: Optional[int] = None
    for lineno, obj in iter_jsonl(path):
        for key in ("video_id", "values"):
            if key not in obj:
                raise CorpusError(f"{path.name} line {lineno}: missing field {key}")
        vid = obj["video_id"]
        if vid not in known:
            raise CorpusError(f"{path.name} line {lineno}: unknown video {vid!r}")
        try:
            fv = FeatureVector(video_id=vid, values=tuple(obj["values"]))
        except CorpusError as exc:
            raise CorpusError(f"{path.name} line {lineno}: {exc}") from exc
        if dim is None:
            dim = fv.dim
        elif fv.dim != dim:
            raise CorpusError(
                f"{path.name} line {lineno}: feature dimension {fv.dim} != {dim}")
        out[vid] = fv
    return out


def _load_title_tokens(path: Path, known: set[str]) -> dict[str, TitleTokenization]:
    out: dict[str, TitleTokenization] = {}
    for lineno, obj in iter_jsonl(path):
        for key in ("video_id", "tokens"):
            if key not in obj:
                raise CorpusError(f"{path.name} line {lineno}: missing field {key}")
        vid = obj["video_id"]
        if vid not in known:
            raise CorpusError(f"{path.name} line {lineno}: unknown video {vid!r}")
        try:
            tokens = tuple(
                Token(surface=t["surface"], pos=t["pos"],
                      head=t.get("head"), relation=t.get("relation"))
                for t in obj["tokens"])
            out[vid] = TitleTokenization(video_id=vid, tokens=tokens)
        except (CorpusError, KeyError) as exc:
            raise CorpusError(f"{path.name} line {lineno}: {exc}") from exc
    return out


def _load_similarity(path: Path) -> dict[tuple[str, str], float]:
    out: dict[tuple[str, str], float] = {}
    for lineno, obj in iter_jsonl(path):
        for key in ("source", "target", "sim"):
            if key not in obj:
                raise CorpusError(f"{path.name} line {lineno}: missing field {key}")
        sim = float(obj["sim"])
        if not 0.0 <= sim <= 1.0:
            raise CorpusError(f"{path.name} line {lineno}: similarity {sim} out of [0, 1]")
        out[(obj["source"], obj["target"])] = sim
    return out


def load_sidecars(directory: str | os.PathLike,
                  manifest: Sequence[VideoRecord]) -> SidecarBundle:
    """Load whatever sidecar files exist in `directory`.

    Missing files simply leave the corresponding map empty; the cleaning
    pipeline then applies its documented conservative treatment. Every
    cross-reference is validated against the manifest.
    """
    directory = Path(directory)
    known = {rec.id for rec in manifest}

    frames: dict[str, tuple[FrameRecord, ...]] = {}
    path = directory / SIDECAR_FILES["frames"]
    if path.exists():
        frames = _load_frames(path, known)

    label_scores: dict[tuple[str, str], LabelScoreSet] = {}
    for dimension in DIMENSIONS:
        path = directory / f"labels.{dimension}.jsonl"
        if path.exists():
            label_scores.update(_load_label_scores(path, dimension, known))

    features: dict[str, FeatureVector] = {}
    path = directory / SIDECAR_FILES["features"]
    if path.exists():
        features = _load_features(path, known)

    title_tokens: dict[str, TitleTokenization] = {}
    path = directory / SIDECAR_FILES["title_tokens"]
    if path.exists():
        title_tokens = _load_title_tokens(path, known)

    similarity: dict[tuple[str, str], float] = {}
    path = directory / SIDECAR_FILES["label_sim"]
    if path.exists():
        similarity = _load_similarity(path)

    return SidecarBundle(frames=frames, label_scores=label_scores,
                         features=features, title_tokens=title_tokens,
                         similarity=similarity)


def save_sidecars(bundle: SidecarBundle, directory: str | os.PathLike) -> None:
    """Write a bundle back out in the canonical file forms (only nonempty maps)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    if bundle.frames:
        rows = [frame.to_dict() for vid in sorted(bundle.frames)
                for frame in bundle.frames[vid]]
        write_jsonl(directory / SIDECAR_FILES["frames"], rows)
    for dimension in DIMENSIONS:
        entries = sorted(vid for vid, dim in bundle.label_scores if dim == dimension)
        if entries:
            rows = [bundle.label_scores[(vid, dimension)].to_dict() for vid in entries]
            write_jsonl(directory / f"labels.{dimension}.jsonl", rows)
    if bundle.features:
        write_jsonl(directory / SIDECAR_FILES["features"],
                    [bundle.features[vid].to_dict() for vid in sorted(bundle.features)])
    if bundle.title_tokens:
        write_jsonl(directory / SIDECAR_FILES["title_tokens"],
                    [bundle.title_tokens[vid].to_dict() for vid in sorted(bundle.title_tokens)])
    if bundle.similarity:
        rows = [{"source": s, "target": t, "sim": bundle.similarity[(s, t)]}
                for s, t in sorted(bundle.similarity)]
        write_jsonl(directory / SIDECAR_FILES["label_sim"], rows)
