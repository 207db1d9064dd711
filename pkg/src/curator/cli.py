"""Command-line entry point: curator clean | preselect | eval | stats | serve | export.

Every threshold is overridable through one layered JSON config file
(sections "clean" and "preselect") plus flags, with flags winning; reports
embed a digest of the resolved configuration so any number is traceable.
Exit codes: 0 success, 1 domain/validation error, 2 environment/IO error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import fields, replace
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

from . import clean as clean_mod
from . import metrics as metrics_mod
from .ingest import iter_jsonl, load_manifest, load_sidecars, write_jsonl
from .model import GT_DIMENSIONS, CorpusError, GroundTruth, RankedPrediction, canonical_json
from .preselect import PreselectConfig, preselect_candidates, vote_all
from .service import AnnotationStore, create_app


def _digest(payload: Any) -> str:
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


def _load_config_file(path: Optional[str]) -> dict[str, Any]:
    path = path or os.environ.get("CURATOR_CONFIG")
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise CorpusError("config file must hold a JSON object")
    return cfg


def _layered(defaults: Any, section: Mapping[str, Any], args: argparse.Namespace) -> Any:
    """File section overrides dataclass defaults; flags override the file."""
    known = {f.name for f in fields(defaults)}
    unknown = set(section) - known
    if unknown:
        raise CorpusError(f"unknown config keys: {sorted(unknown)}")
    merged = replace(defaults, **section)
    overrides = {name: getattr(args, name)
                 for name in known
                 if getattr(args, name, None) is not None}
    return replace(merged, **overrides)


def _write_json(path: Path, payload: Mapping[str, Any]) -> None:
    path.write_text(json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")


# ---------------------------------------------------------------------------
# subcommands

def cmd_clean(args: argparse.Namespace) -> int:
    cfg = _layered(clean_mod.CleanConfig(),
                   _load_config_file(args.config).get("clean", {}), args)
    manifest = load_manifest(args.manifest)
    sidecars = load_sidecars(args.sidecars, manifest)
    verdicts, summary = clean_mod.run_pipeline(manifest, sidecars, cfg,
                                               workers=args.workers or 1)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(out / "verdicts.jsonl", [v.to_dict() for v in verdicts])
    _write_json(out / "summary.json", summary)
    removed = summary["removed"]
    print(f"cleaned {summary['input']} videos: kept {summary['kept']}, removed "
          + ", ".join(f"{k}={v}" for k, v in removed.items()))
    return 0


def cmd_preselect(args: argparse.Namespace) -> int:
    cfg = _layered(PreselectConfig(),
                   _load_config_file(args.config).get("preselect", {}), args)
    manifest = load_manifest(args.manifest)
    if args.verdicts:
        kept = {obj["video_id"] for _, obj in iter_jsonl(Path(args.verdicts))
                if obj.get("kept")}
        corpus = [rec for rec in manifest if rec.id in kept]
    else:
        corpus = manifest
    sidecars = load_sidecars(args.sidecars, manifest)
    voted = vote_all(corpus, sidecars.features, cfg)
    chosen = preselect_candidates(corpus, sidecars.features, cfg, voted=voted)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(out / "candidates.jsonl",
                [{"video_id": vid, "voted_tags": voted[vid]} for vid in chosen])
    print(f"preselected {len(chosen)} of {len(corpus)} videos "
          f"(eligible: {len(voted)}, seed: {cfg.seed})")
    return 0


def _load_groundtruth(path: str) -> list[GroundTruth]:
    records = []
    for _, obj in iter_jsonl(Path(path)):
        if "summary" in obj and "video_id" not in obj:
            continue  # export trailer
        records.append(GroundTruth.from_dict(obj))
    return records


def _eval_tagging(args: argparse.Namespace) -> dict[str, Any]:
    lang = args.lang
    truth = _load_groundtruth(args.groundtruth)
    preds: dict[tuple[str, str], RankedPrediction] = {}
    for lineno, obj in iter_jsonl(Path(args.predictions)):
        for key in ("video_id", "dimension", "ranking"):
            if key not in obj:
                raise CorpusError(f"predictions line {lineno}: missing field {key}")
        key = (obj["video_id"], obj["dimension"])
        preds[key] = RankedPrediction(subject_id=obj["video_id"],
                                      ranking=tuple((i, s) for i, s in obj["ranking"]))

    known = {rec.video_id for rec in truth}
    stray = sorted({vid for vid, _ in preds} - known)
    if stray:
        raise CorpusError(f"predictions for videos without ground truth: {stray}")

    per_dim: dict[str, float] = {}
    for dim in GT_DIMENSIONS:
        pairs = []
        missing = []
        for rec in truth:
            labels = rec.labels[dim].get(lang)
            if not labels:
                continue  # record not annotated in this language
            pred = preds.get((rec.video_id, dim))
            if pred is None:
                missing.append(rec.video_id)
                continue
            pairs.append((pred, set(labels)))
        if missing:
            raise CorpusError(f"no {dim} predictions for: {missing}")
        if pairs:
            per_dim[dim] = metrics_mod.mean_ap(pairs)
    if not per_dim:
        raise CorpusError(f"ground truth has no {lang} labels to evaluate")
    overall = sum(per_dim.values()) / len(per_dim)
    return {
        "task": "tagging",
        "lang": lang,
        "per_dimension": {dim: {"raw": v, "percent": 100.0 * v}
                          for dim, v in per_dim.items()},
        "overall": {"raw": overall, "percent": 100.0 * overall},
    }


def _eval_retrieval(args: argparse.Namespace) -> dict[str, Any]:
    with open(args.sim_matrix, encoding="utf-8") as fh:
        sim = metrics_mod.SimMatrix.from_dict(json.load(fh))
    if args.truth:
        truth = {obj["query_id"]: obj["video_id"]
                 for _, obj in iter_jsonl(Path(args.truth))}
    else:
        truth = {qid: qid for qid in sim.query_ids}
    scores = metrics_mod.recall_at(sim, truth)
    return {
        "task": "retrieval",
        "track": args.track,
        "metrics": scores,
        "raw": {name: value / 100.0 for name, value in scores.items()},
    }


def _eval_caption(args: argparse.Namespace) -> dict[str, Any]:
    hyps = []
    refs = []
    for lineno, obj in iter_jsonl(Path(args.captions)):
        for key in ("video_id", "hyp", "ref"):
            if key not in obj:
                raise CorpusError(f"captions line {lineno}: missing field {key}")
        hyps.append(metrics_mod.SegmentedCaption.segment(obj["hyp"], obj.get("hyp_tokens")))
        refs.append(metrics_mod.SegmentedCaption.segment(obj["ref"], obj.get("ref_tokens")))
    b4 = metrics_mod.bleu4(hyps, refs, smooth=args.smooth_bleu)
    met = metrics_mod.meteor_corpus(hyps, refs)
    cid = metrics_mod.cider(hyps, refs)
    overall = metrics_mod.caption_overall(100.0 * b4, 100.0 * met, 10.0 * cid)
    return {
        "task": "caption",
        "track": args.track,
        "metrics": {
            "bleu4": {"raw": b4, "scaled": 100.0 * b4},
            "meteor": {"raw": met, "scaled": 100.0 * met},
            "cider": {"raw": cid, "scaled": 10.0 * cid},
        },
        "overall": {"scaled": overall},
    }


def cmd_eval(args: argparse.Namespace) -> int:
    if args.task == "tagging":
        report = _eval_tagging(args)
        summary = ", ".join(f"{dim}={v['percent']:.2f}"
                            for dim, v in report["per_dimension"].items())
        line = f"tagging mAP ({args.lang}): {summary}, overall={report['overall']['percent']:.2f}"
    elif args.task == "retrieval":
        report = _eval_retrieval(args)
        line = "retrieval ({}): {}".format(
            args.track, ", ".join(f"{k}={v:.2f}" for k, v in report["metrics"].items()))
    else:
        report = _eval_caption(args)
        m = report["metrics"]
        line = (f"caption ({args.track}): BLEU4={m['bleu4']['scaled']:.2f}, "
                f"METEOR-exact={m['meteor']['scaled']:.2f}, CIDEr={m['cider']['scaled']:.2f}, "
                f"overall={report['overall']['scaled']:.2f}")
    report["config_digest"] = _digest({k: v for k, v in vars(args).items()
                                       if k != "func" and v is not None})
    _write_json(Path(args.out), report)
    print(line)
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    if not manifest:
        raise CorpusError("manifest is empty, nothing to describe")
    report: dict[str, Any] = {
        "videos": len(manifest),
        "duration_s": metrics_mod.describe([rec.duration_s for rec in manifest]),
        "file_size_bytes": metrics_mod.describe([rec.file_size_bytes for rec in manifest]),
        "title_chars": metrics_mod.describe([len(rec.title) for rec in manifest]),
    }
    if args.groundtruth:
        truth = _load_groundtruth(args.groundtruth)
        if truth:
            report["labels_per_video"] = {
                dim: metrics_mod.describe([len(rec.labels[dim]["zh"]) for rec in truth])
                for dim in GT_DIMENSIONS}
            report["caption_chars"] = metrics_mod.describe(
                [len(rec.captions["zh"]) for rec in truth])
    if args.out:
        _write_json(Path(args.out), report)
    print(json.dumps(report, ensure_ascii=False, sort_keys=True, indent=2))
    return 0


def _build_store(args: argparse.Namespace) -> AnnotationStore:
    manifest = load_manifest(args.manifest)
    if args.candidates:
        order = [obj["video_id"] for _, obj in iter_jsonl(Path(args.candidates))]
        by_id = {rec.id: rec for rec in manifest}
        missing = [vid for vid in order if vid not in by_id]
        if missing:
            raise CorpusError(f"candidates not in manifest: {missing}")
        queue = [by_id[vid] for vid in order]
    else:
        queue = manifest
    return AnnotationStore.from_log(
        queue, args.log, lease_s=args.lease,
        snapshot_path=args.snapshot,
        media_url_template=args.media_url_template)


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    store = _build_store(args)
    app = create_app(store, ui_dir=args.ui)
    print(f"serving {store.stats()['total']} items on port {args.port} "
          f"(log: {args.log})")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_export(args: argparse.Namespace) -> int:
    store = _build_store(args)
    records, trailer = store.export()
    lines = [canonical_json(rec.to_dict()) for rec in records]
    lines.append(canonical_json({"summary": trailer}))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    print(f"exported {trailer['reviewed']} reviewed records", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="curator",
        description="Curate and evaluate a webly-annotated short-video corpus.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("clean", help="run the four-stage cleaning pipeline")
    p.add_argument("--manifest", required=True)
    p.add_argument("--sidecars", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="layered JSON config (or CURATOR_CONFIG)")
    p.add_argument("--workers", type=int)
    p.add_argument("--face-area-ratio", dest="face_area_ratio", type=float)
    p.add_argument("--frame-fraction", dest="frame_fraction", type=float)
    p.add_argument("--mosaic-face-threshold", dest="mosaic_face_threshold", type=int)
    p.add_argument("--ocr-char-threshold", dest="ocr_char_threshold", type=int)
    p.add_argument("--high-pct", dest="high_pct", type=float)
    p.add_argument("--mid-pct", dest="mid_pct", type=float)
    p.add_argument("--stopwords", dest="stopword_path")
    p.add_argument("--char-filter", dest="char_filter",
                   choices=("keep_han_ascii", "off"))
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("preselect", help="neighbor-vote and sample annotation candidates")
    p.add_argument("--manifest", required=True)
    p.add_argument("--sidecars", required=True)
    p.add_argument("--verdicts", help="verdicts.jsonl restricting to the kept set")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--min-votes", dest="min_votes", type=int)
    p.add_argument("--sample-n", dest="sample_n", type=int)
    p.add_argument("--max-duration-s", dest="max_duration_s", type=float)
    p.set_defaults(func=cmd_preselect)

    p = sub.add_parser("eval", help="evaluate tagging / retrieval / captioning")
    p.add_argument("--task", required=True, choices=("tagging", "retrieval", "caption"))
    p.add_argument("--track", choices=("content", "beyond"), default="content")
    p.add_argument("--out", default="report.json")
    p.add_argument("--predictions", help="tagging: predictions.tagging.jsonl")
    p.add_argument("--groundtruth", help="tagging: exported ground-truth jsonl")
    p.add_argument("--lang", choices=("zh", "en"), default="zh")
    p.add_argument("--sim-matrix", dest="sim_matrix", help="retrieval: similarity matrix json")
    p.add_argument("--truth", help="retrieval: query->video truth jsonl (default: identity)")
    p.add_argument("--captions", help="caption: captions.jsonl with hyp/ref per video")
    p.add_argument("--smooth-bleu", dest="smooth_bleu", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", help="descriptive statistics of a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--groundtruth")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    for name, help_text in (("serve", "run the annotation service"),
                            ("export", "export reviewed ground truth from a log")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--manifest", required=True)
        p.add_argument("--candidates", help="candidates.jsonl defining the queue")
        p.add_argument("--log", required=True, help="append-only event log path")
        p.add_argument("--snapshot", help="periodic state snapshot path")
        p.add_argument("--lease", type=float, default=1800.0)
        p.add_argument("--media-url-template", dest="media_url_template",
                       help="per-video media URL, '{id}' substituted")
        if name == "serve":
            p.add_argument("--host", default="127.0.0.1")
            p.add_argument("--port", type=int, default=8080)
            p.add_argument("--ui", help="directory of built frontend assets to serve")
            p.set_defaults(func=cmd_serve)
        else:
            p.add_argument("--out")
            p.set_defaults(func=cmd_export)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CorpusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
