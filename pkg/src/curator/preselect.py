"""Annotation preselection: neighbor-voted tag relevance over feature space,
seeded uniform sampling, and the short-video duration gate.

The neighbor scan is an exact O(n*d) cosine sweep; corpora in the tens of
thousands at ~512-d remain cheap, and exactness keeps the tests honest. An
approximate index can slot in behind the same contract later.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .model import CorpusError, FeatureVector, VideoRecord


@dataclass(frozen=True)
class PreselectConfig:
    k: int = 200
    min_votes: int = 1
    sample_n: int = 10000
    max_duration_s: float = 60.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.k < 1 or self.min_votes < 1 or self.sample_n < 1:
            raise CorpusError("k, min_votes and sample_n must be >= 1")
        if self.max_duration_s <= 0:
            raise CorpusError("max_duration_s must be positive")


def nearest_neighbors(query_id: str, features: Mapping[str, FeatureVector],
                      k: int) -> list[tuple[str, float]]:
    """Top-k ids by cosine similarity to the query, excluding the query itself.

    Descending similarity; exact ties break by ascending id so results are
    reproducible regardless of map ordering.
    """
    if query_id not in features:
        raise CorpusError(f"unknown query video {query_id!r}")
    if k > len(features) - 1:
        raise CorpusError(f"k={k} exceeds corpus size minus one ({len(features) - 1})")
    ids = sorted(features)
    matrix = np.asarray([features[vid].values for vid in ids], dtype=np.float64)
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms == 0.0):
        zero = ids[int(np.argmin(norms))]
        raise CorpusError(f"video {zero!r} has a zero-norm feature vector")
    unit = matrix / norms[:, None]
    sims = unit @ unit[ids.index(query_id)]
    order = sorted((i for i, vid in enumerate(ids) if vid != query_id),
                   key=lambda i: (-sims[i], ids[i]))
    return [(ids[i], float(sims[i])) for i in order[:k]]


def vote_tags(query: VideoRecord, neighbors: Sequence[VideoRecord],
              min_votes: int = 1) -> dict[str, int]:
    """Count, per query tag, the neighbors whose own tag list contains it.

    Matching is exact-string after whitespace trim; only the query's own
    tags are candidates, and only tags reaching min_votes survive.
    """
    if min_votes < 1:
        raise CorpusError("min_votes must be >= 1")
    candidates: list[str] = []
    for tag in query.user_tags:
        tag = tag.strip()
        if tag and tag not in candidates:
            candidates.append(tag)
    neighbor_tags = [{t.strip() for t in nb.user_tags} for nb in neighbors]
    votes = {tag: sum(1 for tags in neighbor_tags if tag in tags) for tag in candidates}
    return {tag: count for tag, count in votes.items() if count >= min_votes}


def vote_all(corpus: Sequence[VideoRecord], features: Mapping[str, FeatureVector],
             cfg: PreselectConfig = PreselectConfig()) -> dict[str, dict[str, int]]:
    """Neighbor-vote every featured video in the corpus; videos without a
    feature vector cannot vote and are skipped."""
    by_id = {video.id: video for video in corpus}
    pool = {vid: fv for vid, fv in features.items() if vid in by_id}
    if len(pool) < 2:
        return {}
    k = min(cfg.k, len(pool) - 1)
    voted: dict[str, dict[str, int]] = {}
    for video in corpus:
        if video.id not in pool:
            continue
        neighbor_ids = [vid for vid, _ in nearest_neighbors(video.id, pool, k)]
        votes = vote_tags(video, [by_id[vid] for vid in neighbor_ids], cfg.min_votes)
        if votes:
            voted[video.id] = votes
    return voted


def preselect_candidates(corpus: Sequence[VideoRecord],
                         features: Mapping[str, FeatureVector],
                         cfg: PreselectConfig = PreselectConfig(),
                         voted: Mapping[str, Mapping[str, int]] | None = None
                         ) -> list[str]:
    """Draw the annotation candidate list from the cleaned corpus.

    From videos with at least one neighbor-voted tag, draw a seeded uniform
    sample of size min(sample_n, eligible), then drop videos running longer
    than max_duration_s (the sample is drawn first, mirroring the workflow:
    long videos are excluded before annotation, not before sampling).
    """
    if voted is None:
        voted = vote_all(corpus, features, cfg)
    eligible = [video.id for video in corpus if voted.get(video.id)]
    rng = random.Random(cfg.seed)
    size = min(cfg.sample_n, len(eligible))
    sample = rng.sample(eligible, size)
    durations = {video.id: video.duration_s for video in corpus}
    return [vid for vid in sample if durations[vid] <= cfg.max_duration_s]
