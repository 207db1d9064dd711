"""Independent brute-force reference implementations of every metric.

These deliberately avoid the package implementations' code paths (per-item
scans instead of running counters, explicit alignment enumeration instead
of search, dense numpy vectors instead of sparse dicts) so agreement is
meaningful evidence, not tautology.
"""

from __future__ import annotations

import itertools
import math
from typing import Mapping, Sequence

import numpy as np


def ap_oracle(ranked_items: Sequence[str], relevant: set[str]) -> float:
    total = 0.0
    for label in relevant:
        if label in ranked_items:
            rank = ranked_items.index(label) + 1
            in_top = sum(1 for item in ranked_items[:rank] if item in relevant)
            total += in_top / rank
    return total / len(relevant)


def recall_oracle(query_ids: Sequence[str], video_ids: Sequence[str],
                  rows: np.ndarray, truth: Mapping[str, str],
                  ns: Sequence[int] = (1, 5, 10)) -> dict[str, float]:
    counts = {n: 0 for n in ns}
    for i, query in enumerate(query_ids):
        ordered = sorted(zip(video_ids, rows[i]), key=lambda p: (-p[1], p[0]))
        rank = [vid for vid, _ in ordered].index(truth[query]) + 1
        for n in ns:
            counts[n] += rank <= n
    out = {f"R@{n}": 100.0 * counts[n] / len(query_ids) for n in ns}
    out["SumR"] = sum(out.values())
    return out


def _grams(tokens: Sequence[str], n: int) -> list[tuple]:
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def bleu_oracle(hyps: Sequence[Sequence[str]], refs: Sequence[Sequence[str]]) -> float:
    precisions = []
    for n in range(1, 5):
        num = 0
        den = 0
        for hyp, ref in zip(hyps, refs):
            hyp_grams = _grams(hyp, n)
            ref_grams = _grams(ref, n)
            for gram in set(hyp_grams):
                num += min(hyp_grams.count(gram), ref_grams.count(gram))
            den += len(hyp_grams)
        precisions.append(num / den if den else 0.0)
    if min(precisions) == 0.0:
        return 0.0
    c = sum(len(h) for h in hyps)
    r = sum(len(r) for r in refs)
    bp = math.exp(1.0 - r / c) if c < r else 1.0
    return bp * (precisions[0] * precisions[1] * precisions[2] * precisions[3]) ** 0.25


def meteor_alignment_oracle(hyp: Sequence[str], ref: Sequence[str]) -> tuple[int, int]:
    """(max matches, min chunks) by enumerating every maximum alignment."""
    words = sorted(set(hyp) & set(ref))
    need = {w: min(hyp.count(w), ref.count(w)) for w in words}
    m = sum(need.values())
    if m == 0:
        return 0, 0
    hyp_pos = {w: [i for i, t in enumerate(hyp) if t == w] for w in words}
    ref_pos = {w: [j for j, t in enumerate(ref) if t == w] for w in words}

    per_word_options = []
    for w in words:
        options = []
        for chosen_h in itertools.combinations(hyp_pos[w], need[w]):
            for chosen_r in itertools.permutations(ref_pos[w], need[w]):
                options.append(list(zip(chosen_h, chosen_r)))
        per_word_options.append(options)

    best = math.inf
    for combo in itertools.product(*per_word_options):
        pairs = sorted(pair for option in combo for pair in option)
        chunks = 1
        for (i1, j1), (i2, j2) in zip(pairs, pairs[1:]):
            if not (i2 == i1 + 1 and j2 == j1 + 1):
                chunks += 1
        best = min(best, chunks)
    return m, int(best)


def meteor_oracle(hyp: Sequence[str], ref: Sequence[str],
                  alpha: float = 0.9, beta: float = 3.0, gamma: float = 0.5) -> float:
    m, chunks = meteor_alignment_oracle(hyp, ref)
    if m == 0:
        return 0.0
    p = m / len(hyp)
    r = m / len(ref)
    fmean = p * r / (alpha * p + (1 - alpha) * r)
    return fmean * (1.0 - gamma * (chunks / m) ** beta)


def cider_oracle(hyps: Sequence[Sequence[str]], refs: Sequence[Sequence[str]]) -> float:
    n_items = len(refs)
    per_item = np.zeros(n_items)
    for n in range(1, 5):
        vocab = sorted({g for caption in list(hyps) + list(refs)
                        for g in _grams(caption, n)})
        index = {g: k for k, g in enumerate(vocab)}
        df = np.zeros(len(vocab))
        for ref in refs:
            for g in set(_grams(ref, n)):
                df[index[g]] += 1
        idf = np.log(n_items / np.maximum(1.0, df)) if vocab else np.zeros(0)

        def vec(caption):
            counts = np.zeros(len(vocab))
            for g in _grams(caption, n):
                counts[index[g]] += 1
            return counts * idf

        for i, (hyp, ref) in enumerate(zip(hyps, refs)):
            h = vec(hyp)
            r = vec(ref)
            denom = np.linalg.norm(h) * np.linalg.norm(r)
            per_item[i] += (h @ r) / denom / 4.0 if denom > 0 else 0.0
    return 10.0 * per_item.mean()
