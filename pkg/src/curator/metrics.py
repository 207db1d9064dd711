"""Evaluation criteria for the three tasks, plus the closed-to-open
vocabulary score transfer, mean pooling, vocabulary comparison and
descriptive statistics.

Caption metrics are self-contained so they stay auditable against their
textbook formulas: corpus-level BLEU4, exact-match METEOR (the stem /
synonym / paraphrase modules need external linguistic resources and are a
documented non-goal), and vanilla CIDEr (not CIDEr-D). Scores from this
module are therefore comparable within the engine, not with other toolkits.
"""

from __future__ import annotations

import logging
import math
import statistics
from collections import Counter
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np

from .model import CorpusError, RankedPrediction, is_han

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# captions and segmentation

def fallback_segment(text: str) -> list[str]:
    """Whitespace split when the text has spaces; otherwise contiguous Han
    text splits per character (non-Han runs stay whole). Real deployments
    should ingest pre-segmented tokens instead."""
    text = text.strip()
    if not text:
        return []
    if any(ch.isspace() for ch in text):
        return text.split()
    tokens: list[str] = []
    buf: list[str] = []
    for ch in text:
        if is_han(ch):
            if buf:
                tokens.append("".join(buf))
                buf = []
            tokens.append(ch)
        else:
            buf.append(ch)
    if buf:
        tokens.append("".join(buf))
    return tokens


@dataclass(frozen=True)
class SegmentedCaption:
    raw: str
    tokens: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if self.raw.strip() and not self.tokens:
            raise CorpusError("nonempty caption segmented to zero tokens")

    @classmethod
    def segment(cls, raw: str, tokens: Optional[Sequence[str]] = None) -> "SegmentedCaption":
        if tokens is not None:
            return cls(raw=raw, tokens=tuple(tokens))
        return cls(raw=raw, tokens=tuple(fallback_segment(raw)))


# ---------------------------------------------------------------------------
# Task I: open-set tagging

def average_precision(pred: RankedPrediction, relevant: Iterable[str]) -> float:
    """AP = mean over relevant labels of precision at the rank where each is
    hit; relevant labels the ranking never mentions contribute zero."""
    relevant = set(relevant)
    if not relevant:
        raise CorpusError(f"{pred.subject_id}: empty relevant set")
    hits = 0
    total = 0.0
    for rank, (item, _) in enumerate(pred.ranking, start=1):
        if item in relevant:
            hits += 1
            total += hits / rank
    return total / len(relevant)


def mean_ap(per_video: Sequence[tuple[RankedPrediction, Iterable[str]]]) -> float:
    if not per_video:
        raise CorpusError("mean AP over an empty list")
    return sum(average_precision(pred, relevant) for pred, relevant in per_video) / len(per_video)


def transfer_scores(top_preds: Sequence[tuple[str, float]], target_vocab: Sequence[str],
                    sim: Mapping[tuple[str, str], float],
                    subject_id: str = "query") -> RankedPrediction:
    """Map a closed-vocabulary model's top predictions onto an open tag
    vocabulary: score(tag) = sum over predicted labels of score * similarity.

    Pairs absent from the similarity map count as zero; misses are recorded
    on the module logger.
    """
    missing = 0
    scored: list[tuple[str, float]] = []
    for tag in target_vocab:
        total = 0.0
        for label, score in top_preds:
            weight = sim.get((label, tag))
            if weight is None:
                missing += 1
                weight = 0.0
            total += score * weight
        scored.append((tag, total))
    if missing:
        logger.debug("transfer_scores(%s): %d (label, tag) pairs missing from the "
                     "similarity map, treated as 0", subject_id, missing)
    return RankedPrediction(subject_id=subject_id, ranking=tuple(scored))


# ---------------------------------------------------------------------------
# Task II: text-to-video retrieval

@dataclass(frozen=True)
class SimMatrix:
    """Query-by-video similarity scores with their id axes."""

    query_ids: tuple[str, ...]
    video_ids: tuple[str, ...]
    rows: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "query_ids", tuple(self.query_ids))
        object.__setattr__(self, "video_ids", tuple(self.video_ids))
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.shape != (len(self.query_ids), len(self.video_ids)):
            raise CorpusError(
                f"similarity matrix shaped {rows.shape}, expected "
                f"{(len(self.query_ids), len(self.video_ids))}")
        object.__setattr__(self, "rows", rows)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SimMatrix":
        for key in ("query_ids", "video_ids", "rows"):
            if key not in data:
                raise CorpusError(f"missing field {key}")
        return cls(query_ids=tuple(data["query_ids"]),
                   video_ids=tuple(data["video_ids"]),
                   rows=np.asarray(data["rows"], dtype=np.float64))

    def to_dict(self) -> dict[str, Any]:
        return {"query_ids": list(self.query_ids), "video_ids": list(self.video_ids),
                "rows": self.rows.tolist()}


def recall_at(sim: SimMatrix, truth: Mapping[str, str],
              ns: Sequence[int] = (1, 5, 10)) -> dict[str, float]:
    """R@N (in percent) over the matrix's queries, plus their sum (SumR).

    The truth video's rank is 1 + the number of videos scoring strictly
    higher, with exact score ties broken by ascending video id.
    """
    missing_rows = sorted(set(truth) - set(sim.query_ids))
    if missing_rows:
        raise CorpusError(f"queries missing from the matrix: {missing_rows}")
    col_of = {vid: j for j, vid in enumerate(sim.video_ids)}
    ranks: list[int] = []
    for i, query in enumerate(sim.query_ids):
        if query not in truth:
            raise CorpusError(f"no ground-truth video for query {query!r}")
        target = truth[query]
        if target not in col_of:
            raise CorpusError(f"truth video {target!r} is not a matrix column")
        row = sim.rows[i]
        t = col_of[target]
        ahead = sum(
            1 for j, vid in enumerate(sim.video_ids)
            if j != t and (row[j] > row[t] or (row[j] == row[t] and vid < target))
        )
        ranks.append(1 + ahead)
    out: dict[str, float] = {}
    for n in ns:
        out[f"R@{n}"] = 100.0 * sum(1 for r in ranks if r <= n) / len(ranks)
    out["SumR"] = sum(out[f"R@{n}"] for n in ns)
    return out


def mean_pool(frame_features: Sequence[Sequence[float]]) -> np.ndarray:
    """Element-wise mean of frame-level features, the video-level feature of
    the image-text models."""
    if not len(frame_features):
        raise CorpusError("mean_pool over zero frames")
    dims = {len(v) for v in frame_features}
    if len(dims) != 1:
        raise CorpusError(f"frame feature dimensions differ: {sorted(dims)}")
    return np.asarray(frame_features, dtype=np.float64).mean(axis=0)


# ---------------------------------------------------------------------------
# Task III: captioning

def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu4(hyps: Sequence[SegmentedCaption], refs: Sequence[SegmentedCaption],
          smooth: bool = False) -> float:
    """Corpus-level BLEU with uniform 1/4 weights over 1..4-grams, clipped
    precision and brevity penalty exp(1 - r/c) when the hypotheses run short.

    Any zero n-gram precision yields 0 unless `smooth` adds one to every
    precision's numerator and denominator.
    """
    if len(hyps) != len(refs) or not hyps:
        raise CorpusError("bleu4 needs equally many hypotheses and references (>= 1)")
    matched = [0] * 4
    candidates = [0] * 4
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hyps, refs):
        if not hyp.tokens and not ref.tokens:
            raise CorpusError("caption pair with empty tokens on both sides")
        hyp_len += len(hyp.tokens)
        ref_len += len(ref.tokens)
        for n in range(1, 5):
            hyp_grams = _ngrams(hyp.tokens, n)
            ref_grams = _ngrams(ref.tokens, n)
            matched[n - 1] += sum(min(count, ref_grams[gram])
                                  for gram, count in hyp_grams.items())
            candidates[n - 1] += max(0, len(hyp.tokens) - n + 1)
    if hyp_len == 0:
        return 0.0
    log_sum = 0.0
    for m, c in zip(matched, candidates):
        if smooth:
            p = (m + 1) / (c + 1)
        else:
            p = m / c if c else 0.0
        if p == 0.0:
            return 0.0
        log_sum += 0.25 * math.log(p)
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return bp * math.exp(log_sum)


def _min_chunks(hyp: Sequence[str], ref: Sequence[str]) -> tuple[int, int]:
    """Exact-match unigram alignment statistics: (max matches, min chunks
    over all maximum-cardinality alignments).

    A chunk is a run of aligned pairs adjacent in both sentences. Search is
    exact; it branches only on repeated words, so realistic captions stay
    cheap.
    """
    hyp_counts = Counter(hyp)
    ref_counts = Counter(ref)
    need = {w: min(hyp_counts[w], ref_counts[w])
            for w in hyp_counts if w in ref_counts}
    m = sum(need.values())
    if m == 0:
        return 0, 0

    ref_positions: dict[str, list[int]] = {}
    for j, w in enumerate(ref):
        if w in need:
            ref_positions.setdefault(w, []).append(j)
    # occurrences of each needed word in hyp[i:], to know when skipping is legal
    suffix: list[Counter] = [Counter() for _ in range(len(hyp) + 1)]
    for i in range(len(hyp) - 1, -1, -1):
        suffix[i] = suffix[i + 1].copy()
        if hyp[i] in need:
            suffix[i][hyp[i]] += 1

    word_bits = {w: [1 << j for j in positions] for w, positions in ref_positions.items()}
    memo: dict[tuple[int, int, int], float] = {}

    def matched_count(w: str, mask: int) -> int:
        return sum(1 for bit in word_bits[w] if mask & bit)

    def best(i: int, mask: int, prev_j: int) -> float:
        if i == len(hyp):
            done = all(matched_count(w, mask) == n for w, n in need.items())
            return 0.0 if done else math.inf
        key = (i, mask, prev_j)
        cached = memo.get(key)
        if cached is not None:
            return cached
        w = hyp[i]
        result = math.inf
        remaining = need[w] - matched_count(w, mask) if w in need else 0
        if suffix[i + 1][w] >= remaining:
            result = best(i + 1, mask, -2)
        if remaining > 0:
            for j, bit in zip(ref_positions[w], word_bits[w]):
                if not mask & bit:
                    start = 0 if j - 1 == prev_j else 1
                    result = min(result, start + best(i + 1, mask | bit, j))
        memo[key] = result
        return result

    chunks = best(0, 0, -2)
    return m, int(chunks)


def meteor_exact(hyp: SegmentedCaption, ref: SegmentedCaption,
                 alpha: float = 0.9, beta: float = 3.0, gamma: float = 0.5) -> float:
    """Exact-match METEOR: harmonic precision/recall weighted by alpha, with
    the fragmentation penalty gamma * (chunks / matches) ** beta."""
    if not hyp.tokens or not ref.tokens:
        raise CorpusError("meteor over an empty caption")
    m, chunks = _min_chunks(hyp.tokens, ref.tokens)
    if m == 0:
        return 0.0
    precision = m / len(hyp.tokens)
    recall = m / len(ref.tokens)
    fmean = precision * recall / (alpha * precision + (1 - alpha) * recall)
    penalty = gamma * (chunks / m) ** beta
    return fmean * (1.0 - penalty)


def meteor_corpus(hyps: Sequence[SegmentedCaption], refs: Sequence[SegmentedCaption],
                  alpha: float = 0.9, beta: float = 3.0, gamma: float = 0.5) -> float:
    if len(hyps) != len(refs) or not hyps:
        raise CorpusError("meteor needs equally many hypotheses and references (>= 1)")
    return sum(meteor_exact(h, r, alpha, beta, gamma) for h, r in zip(hyps, refs)) / len(hyps)


def cider(hyps: Sequence[SegmentedCaption], refs: Sequence[SegmentedCaption]) -> float:
    """Vanilla CIDEr: cosine between TF-IDF n-gram vectors (n = 1..4) of each
    hypothesis/reference pair, averaged over n and items, times 10.

    IDF = log(N / df) with df counted over reference items; n-grams never
    seen in any reference take df = 1 so they still weigh down the
    hypothesis norm. Cosine against a zero vector is 0.
    """
    n_items = len(refs)
    if len(hyps) != n_items or n_items < 2:
        raise CorpusError("cider needs a corpus of >= 2 hypothesis/reference pairs")
    df: list[Counter] = [Counter() for _ in range(4)]
    for ref in refs:
        for n in range(1, 5):
            for gram in set(_ngrams(ref.tokens, n)):
                df[n - 1][gram] += 1

    def tfidf(tokens: Sequence[str], n: int) -> dict[tuple, float]:
        return {gram: count * math.log(n_items / max(1, df[n - 1][gram]))
                for gram, count in _ngrams(tokens, n).items()}

    def cosine(a: Mapping[tuple, float], b: Mapping[tuple, float]) -> float:
        norm_a = math.sqrt(sum(v * v for v in a.values()))
        norm_b = math.sqrt(sum(v * v for v in b.values()))
        if norm_a == 0.0 or norm_b == 0.0:
            return 0.0
        dot = sum(v * b[g] for g, v in a.items() if g in b)
        return dot / (norm_a * norm_b)

    total = 0.0
    for hyp, ref in zip(hyps, refs):
        per_n = [cosine(tfidf(hyp.tokens, n), tfidf(ref.tokens, n)) for n in range(1, 5)]
        total += sum(per_n) / 4.0
    return 10.0 * total / n_items


def caption_overall(bleu_scaled: float, meteor_scaled: float, cider_scaled: float) -> float:
    """Mean of the three caption metrics on the reporting scale (BLEU and
    METEOR x100; CIDEr x10, its native 0-10 band mapped onto 0-100)."""
    return (bleu_scaled + meteor_scaled + cider_scaled) / 3.0


# ---------------------------------------------------------------------------
# vocabulary comparison and descriptive statistics

def vocab_compare(a: Iterable[str], b: Iterable[str]) -> tuple[int, int]:
    """(labels in common, labels novel to a), exact string match after trim."""
    set_a = {label.strip() for label in a}
    set_b = {label.strip() for label in b}
    return len(set_a & set_b), len(set_a - set_b)


def describe(values: Sequence[float]) -> dict[str, float]:
    if not values:
        raise CorpusError("describe over an empty list")
    return {
        "min": float(min(values)),
        "max": float(max(values)),
        "mean": float(statistics.fmean(values)),
        "median": float(statistics.median(values)),
    }


@dataclass(frozen=True)
class MetricReport:
    """Per-task scores plus their documented aggregate."""

    task: str
    scores: Mapping[str, float]
    overall: float
    aggregate: str = "mean"

    def __post_init__(self) -> None:
        object.__setattr__(self, "scores", dict(self.scores))
        if self.aggregate not in ("mean", "sum"):
            raise CorpusError(f"unknown aggregate {self.aggregate!r}")
        parts = list(self.scores.values())
        expected = sum(parts) / len(parts) if self.aggregate == "mean" else sum(parts)
        if parts and abs(expected - self.overall) > 1e-9:
            raise CorpusError(
                f"overall {self.overall} is not the {self.aggregate} of {parts}")

    @classmethod
    def build(cls, task: str, scores: Mapping[str, float],
              aggregate: str = "mean") -> "MetricReport":
        parts = list(scores.values())
        overall = sum(parts) / len(parts) if aggregate == "mean" else sum(parts)
        return cls(task=task, scores=scores, overall=overall, aggregate=aggregate)

    def to_dict(self) -> dict[str, Any]:
        return {"task": self.task, "scores": dict(self.scores),
                "overall": self.overall, "aggregate": self.aggregate}
