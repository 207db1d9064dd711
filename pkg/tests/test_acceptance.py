"""Acceptance suite: one test per release criterion, each printing a
pass/fail line with its elapsed time (run with -s to see them live).

Tolerances are pinned here and nowhere else: exact comparisons for counting
and boundary decisions, 1e-12 for rank metrics against their oracles,
1e-9 for caption metrics.
"""

import math
import random
import threading
import time
from contextlib import contextmanager

import numpy as np
import pytest

from curator.clean import (
    CleanConfig,
    classify_face_frame,
    classify_face_video,
    classify_text_heavy,
    compute_percentile_thresholds,
    filter_contentless,
    run_pipeline,
)
from curator.metrics import (
    SegmentedCaption,
    SimMatrix,
    average_precision,
    bleu4,
    cider,
    mean_ap,
    meteor_exact,
    recall_at,
)
from curator.model import (
    GT_DIMENSIONS,
    FeatureVector,
    FrameRecord,
    LabelScoreSet,
    RankedPrediction,
    TokenGrid,
    VideoRecord,
)
from curator.preselect import PreselectConfig, nearest_neighbors, preselect_candidates
from curator.service import AnnotationStore
from curator.vtr import reduce_tokens

from fixtures import build_planted_corpus
from oracles import ap_oracle, bleu_oracle, cider_oracle, meteor_oracle, recall_oracle

RANK_TOL = 1e-12
CAPTION_TOL = 1e-9


@contextmanager
def criterion(name, budget_s):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"[FAIL] {name}")
        raise
    elapsed = time.perf_counter() - start
    assert elapsed < budget_s, f"{name}: {elapsed:.2f}s exceeded {budget_s}s budget"
    print(f"[PASS] {name} ({elapsed:.2f}s)")


def cap(*tokens):
    return SegmentedCaption(raw=" ".join(tokens), tokens=tokens)


# ---------------------------------------------------------------------------

def test_vtr_token_counts():
    with criterion("VTR counts: 202 / 212 / 604", budget_s=1.0):
        def grid(k, p):
            values = np.arange(k * (p + 1) * 3, dtype=np.float64).reshape(k, p + 1, 3)
            return TokenGrid(k=k, p=p, d=3, values=values)

        rows, prov = reduce_tokens(grid(6, 196))
        assert rows.shape[0] == 202 and len(prov) == 202
        rows, prov = reduce_tokens(grid(16, 196))
        assert rows.shape[0] == 212 and len(prov) == 212
        rows, prov = reduce_tokens(grid(16, 196), mode="middle_first_last")
        assert rows.shape[0] == 604 and len(prov) == 604


def test_cleaning_fixture_precision_recall():
    with criterion("cleaning fixture: 100% precision/recall per category",
                   budget_s=5.0):
        records, sidecars, expected = build_planted_corpus()
        baseline = None
        for workers in (1, 4, 8):
            verdicts, summary = run_pipeline(records, sidecars, CleanConfig(),
                                             workers=workers)
            got = {v.video_id: v.category for v in verdicts}
            for category in ("empty_title", "face_only", "text_heavy", "content_less"):
                predicted = {vid for vid, cat in got.items() if cat == category}
                planted = {vid for vid, cat in expected.items() if cat == category}
                assert predicted == planted, f"{category}: {predicted ^ planted}"
            assert summary["kept"] == 120
            if baseline is None:
                baseline = verdicts
            else:
                assert verdicts == baseline
        # second run, same thread count: bit-identical verdicts
        again, _ = run_pipeline(records, sidecars, CleanConfig(), workers=4)
        assert again == baseline


def test_boundary_table():
    with criterion("boundary table: every strict inequality", budget_s=1.0):
        cfg = CleanConfig()

        def frame(boxes=(), ocr=0, idx=0):
            return FrameRecord(video_id="v", frame_index=idx, frame_w=100,
                               frame_h=100, face_boxes=tuple(boxes),
                               ocr_char_count=ocr)

        # face area ratio: exactly 0.5 kept, one pixel-column more removed
        assert classify_face_frame(frame([(0, 0, 50, 100)]), cfg) == "normal"
        assert classify_face_frame(frame([(0, 0, 51, 100)]), cfg) == "talking_head"

        # mosaic faces: 8 kept, 9 removed
        def faces(n):
            return [frame([(j * 11, 0, 9, 9) for j in range(n)]), frame(idx=1)]
        assert classify_face_video(faces(8), cfg)[0] is False
        assert classify_face_video(faces(9), cfg)[0] is True

        # OCR characters: 50 not heavy, 51 heavy
        assert classify_text_heavy([frame(ocr=50, idx=i) for i in range(4)], cfg)[0] is False
        assert classify_text_heavy([frame(ocr=51, idx=i) for i in range(4)], cfg)[0] is True

        # frame fraction: exactly 0.75 kept, one more frame removed (both filters)
        talking = [frame([(0, 0, 80, 80)], idx=i) for i in range(3)]
        assert classify_face_video(talking + [frame(idx=3)], cfg)[0] is False
        assert classify_face_video(talking + [frame([(0, 0, 80, 80)], idx=3)], cfg)[0] is True
        heavy3 = [frame(ocr=51, idx=i) for i in range(3)]
        assert classify_text_heavy(heavy3 + [frame(ocr=0, idx=3)], cfg)[0] is False
        assert classify_text_heavy(heavy3 + [frame(ocr=51, idx=3)], cfg)[0] is True

        # duration: 60 s retained, one ulp (and one unit) above excluded
        def chosen(duration):
            corpus = [VideoRecord(id="a", duration_s=duration, file_size_bytes=1,
                                  title="t", user_tags=("x",)),
                      VideoRecord(id="b", duration_s=10.0, file_size_bytes=1,
                                  title="t", user_tags=("x",))]
            features = {"a": FeatureVector("a", (1.0, 0.0)),
                        "b": FeatureVector("b", (1.0, 0.1))}
            return preselect_candidates(corpus, features,
                                        PreselectConfig(k=1, sample_n=10, seed=0))
        assert "a" in chosen(60.0)
        assert "a" not in chosen(math.nextafter(60.0, math.inf))
        assert "a" not in chosen(61.0)


def test_metric_oracle_suite():
    with criterion("metric oracle agreement (>=100 instances each)", budget_s=30.0):
        rng = random.Random(2024)

        # AP and mean AP
        pairs = []
        for _ in range(120):
            pool = rng.sample(list("abcdef"), rng.randint(1, 6))
            scores = [rng.choice((0.2, 0.4, 0.6, 0.8)) for _ in pool]
            pred = RankedPrediction("q", tuple(zip(pool, scores)))
            relevant = set(rng.sample(list("abcdef"), rng.randint(1, 6)))
            assert average_precision(pred, relevant) == pytest.approx(
                ap_oracle(list(pred.items()), relevant), abs=RANK_TOL)
            pairs.append((pred, relevant))
        expected_map = sum(ap_oracle(list(p.items()), r) for p, r in pairs) / len(pairs)
        assert mean_ap(pairs) == pytest.approx(expected_map, abs=RANK_TOL)

        # R@N
        nprng = np.random.default_rng(2024)
        for _ in range(100):
            nq, nv = int(nprng.integers(1, 7)), int(nprng.integers(2, 13))
            queries = tuple(f"q{i}" for i in range(nq))
            videos = tuple(f"v{i}" for i in range(nv))
            rows = np.round(nprng.random((nq, nv)), 1)
            truth = {q: videos[nprng.integers(nv)] for q in queries}
            got = recall_at(SimMatrix(queries, videos, rows), truth)
            want = recall_oracle(queries, videos, rows, truth)
            for key, value in want.items():
                assert got[key] == pytest.approx(value, abs=RANK_TOL)

        # caption metrics on <=6-item corpora of <=8-token captions
        vocab = list("abcde")

        def corpus(n):
            return ([cap(*(rng.choice(vocab) for _ in range(rng.randint(1, 8))))
                     for _ in range(n)],
                    [cap(*(rng.choice(vocab) for _ in range(rng.randint(1, 8))))
                     for _ in range(n)])

        for _ in range(100):
            hyps, refs = corpus(rng.randint(1, 6))
            assert bleu4(hyps, refs) == pytest.approx(
                bleu_oracle([h.tokens for h in hyps], [r.tokens for r in refs]),
                abs=CAPTION_TOL)
        for _ in range(100):
            hyp, ref = corpus(1)
            assert meteor_exact(hyp[0], ref[0]) == pytest.approx(
                meteor_oracle(hyp[0].tokens, ref[0].tokens), abs=CAPTION_TOL)
        for _ in range(100):
            hyps, refs = corpus(rng.randint(2, 6))
            assert cider(hyps, refs) == pytest.approx(
                cider_oracle([h.tokens for h in hyps], [r.tokens for r in refs]),
                abs=CAPTION_TOL)


def test_hand_computed_goldens():
    with criterion("hand-computed goldens", budget_s=1.0):
        pred = RankedPrediction("q", (("a", 0.9), ("b", 0.8), ("c", 0.7)))
        assert average_precision(pred, {"a", "c"}) == pytest.approx(5 / 6, abs=CAPTION_TOL)

        value = bleu4([cap("a", "b", "c", "d")], [cap("a", "b", "c", "d", "e")])
        assert value == pytest.approx(math.exp(1 - 5 / 4), abs=CAPTION_TOL)

        c = cap("w", "x", "y", "z")
        assert meteor_exact(c, c) == pytest.approx(0.9921875, abs=CAPTION_TOL)

        hyps = [cap("a", "b", "c", "d"), cap("e", "f", "g", "h"),
                cap("i", "j", "k", "l")]
        assert cider(hyps, hyps) == pytest.approx(10.0, abs=CAPTION_TOL)


def test_invariance_properties():
    with criterion("invariance properties (1,000 trials each)", budget_s=60.0):
        rng = random.Random(515)

        # cosine neighbor ordering is invariant to positive per-vector scaling
        for _ in range(1000):
            n = rng.randint(3, 7)
            features = {
                f"v{i}": FeatureVector(f"v{i}", tuple(rng.gauss(0, 1) for _ in range(3)))
                for i in range(n)}
            base = [vid for vid, _ in nearest_neighbors("v0", features, n - 1)]
            factors = {vid: rng.choice((0.25, 2.0, 64.0)) for vid in features}
            scaled = {vid: FeatureVector(vid, tuple(x * factors[vid] for x in fv.values))
                      for vid, fv in features.items()}
            assert [vid for vid, _ in nearest_neighbors("v0", scaled, n - 1)] == base

        # AP is ranking-only: any strictly monotone transform leaves it unchanged
        for _ in range(1000):
            pool = rng.sample(list("abcdef"), rng.randint(2, 6))
            scores = [rng.random() for _ in pool]
            relevant = set(rng.sample(pool, rng.randint(1, len(pool))))
            base = average_precision(RankedPrediction("q", tuple(zip(pool, scores))),
                                     relevant)
            warped = average_precision(
                RankedPrediction("q", tuple((i, 2.0 * math.atan(s) + 5.0)
                                            for i, s in zip(pool, scores))), relevant)
            assert warped == pytest.approx(base, abs=RANK_TOL)

        # SumR identity and R@N monotonicity
        nprng = np.random.default_rng(515)
        for _ in range(1000):
            nq, nv = int(nprng.integers(1, 5)), int(nprng.integers(2, 12))
            queries = tuple(f"q{i}" for i in range(nq))
            videos = tuple(f"v{i}" for i in range(nv))
            sim = SimMatrix(queries, videos, nprng.random((nq, nv)))
            truth = {q: videos[nprng.integers(nv)] for q in queries}
            scores = recall_at(sim, truth)
            assert scores["R@1"] <= scores["R@5"] <= scores["R@10"]
            assert scores["SumR"] == scores["R@1"] + scores["R@5"] + scores["R@10"]

        # content-less emissions survive positive per-dimension score scaling
        dims = ("object", "action", "scene")
        for _ in range(1000):
            sets = [LabelScoreSet(f"v{i}", dim,
                                  {f"l{j}": rng.random() for j in range(2)})
                    for i in range(6) for dim in dims]
            factor = rng.choice((1e-3, 0.5, 7.0, 1e5))
            which = rng.choice(dims)
            scaled = [LabelScoreSet(s.video_id, s.dimension,
                                    {l: v * factor for l, v in s.scores.items()})
                      if s.dimension == which else s for s in sets]
            thr_a = compute_percentile_thresholds(sets, CleanConfig())
            thr_b = compute_percentile_thresholds(scaled, CleanConfig())
            for i in range(6):
                vid = f"v{i}"
                a = filter_contentless(
                    {s.dimension: s for s in sets if s.video_id == vid}, thr_a)
                b = filter_contentless(
                    {s.dimension: s for s in scaled if s.video_id == vid}, thr_b)
                assert a == b


def test_annotation_state_machine_under_concurrency():
    with criterion("annotation state machine: 4 annotators, 50 items",
                   budget_s=30.0):
        videos = [VideoRecord(id=f"v{i:03d}", duration_s=20.0, file_size_bytes=1,
                              title=f"标题{i}", user_tags=("猫", "搞笑"))
                  for i in range(50)]
        store = AnnotationStore(videos)
        errors: list[Exception] = []
        claimed: list[str] = []

        def flow(name, seed):
            rng = random.Random(seed)
            try:
                while True:
                    item = store.next_item(name)
                    if item is None:
                        return
                    claimed.append(item["video_id"])
                    vid = item["video_id"]
                    time.sleep(rng.random() * 0.002)
                    roll = rng.random()
                    if roll < 0.25:  # title rejected
                        store.submit_step(name, vid, "title_verdict", {"relevant": False})
                        continue
                    store.submit_step(name, vid, "title_verdict", {"relevant": True})
                    store.submit_step(name, vid, "caption_set", {"caption": f"猫在玩 {vid}"})
                    empty_dim = rng.choice(("object", "action", "scene", None, None))
                    for dim in ("object", "action", "scene"):
                        labels = [] if dim == empty_dim else [f"{dim}_{vid}", "猫"]
                        store.submit_step(name, vid, "labels_set",
                                          {"dimension": dim, "labels": labels})
                        time.sleep(rng.random() * 0.001)
                    tags = [] if roll > 0.9 else ["猫"]
                    store.submit_step(name, vid, "usertags_verified", {"tags": tags})
                    store.submit_step(name, vid, "finalize", {})
            except Exception as exc:  # pragma: no cover - failure reporting
                errors.append(exc)

        threads = [threading.Thread(target=flow, args=(f"annotator{i}", 100 + i))
                   for i in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors, errors

        # no double claims: every item was claimed exactly once
        assert len(claimed) == 50 and len(set(claimed)) == 50

        # review whatever was annotated, then export
        stats = store.stats()
        assert stats["states"]["pending"] == 0
        for vid in sorted(store.dump_state()):
            if store.item_view(vid)["state"] == "annotated":
                store.review("board", vid, {},
                             {"caption": f"a cat {vid}",
                              "labels": {dim: ["cat"] for dim in GT_DIMENSIONS}})
        records, trailer = store.export()
        assert trailer["reviewed"] == len(records) > 0
        for record in records:
            for dim in GT_DIMENSIONS:
                assert record.labels[dim]["zh"], f"{record.video_id}: empty {dim}"

        # the event log replays to the exact live state
        replayed = AnnotationStore.replay(videos, store.events())
        assert replayed.dump_state() == store.dump_state()
