"""Command-line entry points: eval, triage, bootstrap, convert, index-sizes, serve."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .bootstrap import (
    BootstrapPlan,
    TrainerContract,
    make_human_pool,
    plan_rounds,
    run_loop,
    sample_seed,
    select_top_k,
)
from .errors import HandTriageError
from .evaluator import EvalConfig, evaluate_detailed, render_fixed_table, report_to_dict
from .formats import (
    Detection,
    coco_to_yolo_ground_truth,
    load_coco_detections,
    load_coco_ground_truth,
    load_yolo_detection_dir,
    parse_yolo_labels,
    read_size_index,
    serialize_size_index,
    serialize_yolo_labels,
    yolo_to_coco_detections,
    yolo_to_coco_ground_truth,
)
from .geometry import ImageSize
from .store import RunStore, new_run_id
from .triage import export_csv, export_report, list_frame_files, run_triage

__all__ = ["build_parser", "main"]


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(","))


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in text.split(","))


def _plan_spec(text: str) -> dict:
    """Parse "seed=500,add=1000,rounds=2" into plan keyword arguments."""
    keys = {"seed": "seed_size", "add": "per_round", "rounds": "rounds"}
    out = {}
    for part in text.split(","):
        name, _, value = part.partition("=")
        if name not in keys or not value:
            raise argparse.ArgumentTypeError(
                f"bad plan entry {part!r}; expected seed=N,add=N,rounds=N"
            )
        out[keys[name]] = int(value)
    missing = [k for k in keys if keys[k] not in out]
    if missing:
        raise argparse.ArgumentTypeError(f"plan is missing {', '.join(missing)}")
    return out


def _read_id_list(path: str) -> list[str]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [line.strip() for line in lines if line.strip()]


def _coco_id_lookup(path: str) -> dict[int, str]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return {img["id"]: img["file_name"] for img in doc.get("images", [])}


def _load_detections_arg(path: str, sizes, *, gt_path: str | None = None) -> list[Detection]:
    """Detections from either a COCO JSON array or a YOLO label directory."""
    p = Path(path)
    if p.is_dir():
        if sizes is None:
            raise HandTriageError("a size index is required to read a YOLO label directory")
        return load_yolo_detection_dir(p, sizes)
    lookup = _coco_id_lookup(gt_path) if gt_path else None
    return load_coco_detections(p, lookup)


def _write_json(path: str | Path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _cmd_eval(args) -> int:
    gt_boxes, sizes = load_coco_ground_truth(args.gt)
    if args.sizes:
        sizes = {**sizes, **read_size_index(args.sizes)}
    detections = _load_detections_arg(args.dt, sizes, gt_path=args.gt)
    cfg = EvalConfig.from_range(
        args.iou_min,
        args.iou_max,
        args.iou_step,
        max_detections=args.max_dets,
        area_edges=args.area_edges,
    )
    report, detail = evaluate_detailed(gt_boxes, detections, cfg)
    print(render_fixed_table(report))
    if args.out:
        _write_json(args.out, report_to_dict(report, cfg, detail))
    return 0


def _cmd_triage(args) -> int:
    frames_dir = Path(args.frames)
    frame_files = list_frame_files(frames_dir)
    sizes = read_size_index(args.sizes) if args.sizes else None
    detections = _load_detections_arg(args.detections, sizes)
    run = run_triage(
        list(frame_files),
        detections,
        args.threshold,
        run_id=new_run_id(),
        frames_dir=str(frames_dir),
        detections_path=str(args.detections),
        min_confidence=args.min_conf,
        normalized=args.normalized,
        frame_sizes=sizes,
    )
    report = export_report(run)
    out = Path(args.out)
    _write_json(out, report)
    out.with_suffix(".csv").write_text(export_csv(run), encoding="utf-8")
    if args.data_dir:
        RunStore(args.data_dir).save_run(run)
    print(json.dumps(report["summary"]))
    return 0


def _make_plan(args) -> BootstrapPlan:
    if args.corpus:
        corpus_size = len(_read_id_list(args.corpus))
    elif args.corpus_size is not None:
        corpus_size = args.corpus_size
    else:
        raise HandTriageError("give either --corpus or --corpus-size")
    return BootstrapPlan(corpus_size=corpus_size, **args.plan)


def _cmd_bootstrap_plan(args) -> int:
    plan = _make_plan(args)
    steps = [
        {"round": s.index, "train_size": s.train_size, "predict_size": s.predict_size}
        for s in plan_rounds(plan)
    ]
    doc = {
        "seed_size": plan.seed_size,
        "per_round": plan.per_round,
        "rounds": plan.rounds,
        "corpus_size": plan.corpus_size,
        "final_train_size": plan.final_train_size,
        "schedule": steps,
    }
    print(json.dumps(doc, indent=2))
    return 0


def _load_prediction_dir(directory: str) -> dict[str, list[Detection]]:
    """Confidence-bearing YOLO files, keyed by image id (path minus .txt)."""
    root = Path(directory)
    out: dict[str, list[Detection]] = {}
    for path in sorted(root.rglob("*.txt")):
        image_id = path.relative_to(root).as_posix()[: -len(".txt")]
        labels = parse_yolo_labels(path.read_text(encoding="utf-8"), image_id=image_id)
        dets = []
        for i, entry in enumerate(labels.entries, start=1):
            if entry.confidence is None:
                raise HandTriageError(f"{path} has no confidence column")
            dets.append(Detection(image_id, entry.box, entry.confidence, i))
        out[image_id] = dets
    return out


def _cmd_bootstrap_select(args) -> int:
    predictions = _load_prediction_dir(args.predictions)
    candidates = _read_id_list(args.candidates) if args.candidates else None
    selection = select_top_k(predictions, args.k, candidates=candidates, aggregate=args.aggregate)
    doc = {
        "selected": list(selection.selected),
        "scores": {i: selection.scores[i] for i in selection.selected},
        "skipped": list(selection.skipped),
    }
    if args.out:
        _write_json(args.out, doc)
    print(json.dumps(doc["selected"]))
    return 0


def _seed_pool_from_dir(directory: str, corpus: list[str], plan, rng_seed: int | None):
    root = Path(directory)
    files = {
        p.relative_to(root).as_posix()[: -len(".txt")]: p for p in sorted(root.rglob("*.txt"))
    }
    if rng_seed is not None:
        wanted = sample_seed(corpus, plan.seed_size, rng_seed)
        missing = [i for i in wanted if i not in files]
        if missing:
            raise HandTriageError(
                f"seed labels missing for {len(missing)} sampled ids, e.g. {missing[0]!r}"
            )
        chosen = wanted
    else:
        chosen = sorted(files)
    labels = {
        i: parse_yolo_labels(files[i].read_text(encoding="utf-8"), image_id=i) for i in chosen
    }
    return make_human_pool(labels)


def _cmd_bootstrap_run(args) -> int:
    corpus = _read_id_list(args.corpus)
    plan = BootstrapPlan(corpus_size=len(corpus), **args.plan)
    seed_pool = _seed_pool_from_dir(args.seed_labels, corpus, plan, args.rng_seed)
    contract = TrainerContract(args.train_cmd, args.predict_cmd, workdir=args.workdir)
    pool, audit = run_loop(
        plan,
        contract,
        corpus,
        seed_pool,
        args.state,
        aggregate=args.aggregate,
        rng_seed=args.rng_seed,
    )
    print(
        json.dumps(
            {
                "labeled": pool.size,
                "human": pool.human_count,
                "pseudo": pool.pseudo_count,
                "rounds_completed": sum(1 for e in audit if e["event"] != "seed"),
            }
        )
    )
    return 0


def _cmd_convert(args) -> int:
    if args.to == "coco":
        sizes = read_size_index(args.sizes)
        root = Path(args.labels)
        labels = {}
        for path in sorted(root.rglob("*.txt")):
            image_id = path.relative_to(root).as_posix()[: -len(".txt")]
            labels[image_id] = parse_yolo_labels(
                path.read_text(encoding="utf-8"), image_id=image_id
            )
        if args.detections:
            doc = yolo_to_coco_detections(labels, sizes)
        else:
            doc = yolo_to_coco_ground_truth(labels, sizes)
        _write_json(args.out, doc)
    else:
        doc = json.loads(Path(args.coco).read_text(encoding="utf-8"))
        labels, sizes = coco_to_yolo_ground_truth(doc)
        out_dir = Path(args.out)
        for image_id, label_file in labels.items():
            path = out_dir / f"{image_id}.txt"
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(serialize_yolo_labels(label_file), encoding="utf-8")
        (out_dir / "sizes.txt").write_text(serialize_size_index(sizes), encoding="utf-8")
    return 0


def _cmd_index_sizes(args) -> int:
    from PIL import Image  # imported lazily; only this command needs pixel access

    frame_files = list_frame_files(args.images)
    sizes = {}
    for image_id, path in frame_files.items():
        with Image.open(path) as img:
            sizes[image_id] = ImageSize(img.width, img.height)
    Path(args.out).write_text(serialize_size_index(sizes), encoding="utf-8")
    print(f"indexed {len(sizes)} images")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.data_dir, read_only=args.read_only, ui_dir=args.ui_dir)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="handtriage",
        description="Hand-detection evaluation, bootstrap labeling, and frame triage.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_eval = sub.add_parser("eval", help="score detections against ground truth")
    p_eval.add_argument("--gt", required=True, help="COCO ground-truth JSON")
    p_eval.add_argument("--dt", required=True, help="COCO detections JSON or YOLO label dir")
    p_eval.add_argument("--sizes", help="image size index (id width height per line)")
    p_eval.add_argument("--iou-min", type=float, default=0.50)
    p_eval.add_argument("--iou-max", type=float, default=0.95)
    p_eval.add_argument("--iou-step", type=float, default=0.05)
    p_eval.add_argument("--max-dets", type=_int_list, default=(1, 10, 100))
    p_eval.add_argument("--area-edges", type=_float_list, default=(1024.0, 9216.0))
    p_eval.add_argument("--out", help="write the full JSON report here")
    p_eval.set_defaults(func=_cmd_eval)

    p_triage = sub.add_parser("triage", help="rank frames by largest detection area")
    p_triage.add_argument("--frames", required=True, help="directory of frame images")
    p_triage.add_argument(
        "--detections", required=True, help="COCO detections JSON or YOLO label dir"
    )
    p_triage.add_argument("--threshold", type=float, required=True)
    p_triage.add_argument("--min-conf", type=float, default=0.0)
    p_triage.add_argument("--normalized", action="store_true")
    p_triage.add_argument("--sizes", help="image size index; required for --normalized")
    p_triage.add_argument("--out", required=True, help="JSON report path (CSV lands beside it)")
    p_triage.add_argument("--data-dir", help="also save the run into this review-store directory")
    p_triage.set_defaults(func=_cmd_triage)

    p_boot = sub.add_parser("bootstrap", help="iterative pseudo-labeling loop")
    boot_sub = p_boot.add_subparsers(dest="subcommand", required=True)

    b_plan = boot_sub.add_parser("plan", help="print the round schedule")
    b_plan.add_argument("--plan", type=_plan_spec, required=True, help="seed=N,add=N,rounds=N")
    b_plan.add_argument("--corpus", help="file listing one image id per line")
    b_plan.add_argument("--corpus-size", type=int)
    b_plan.set_defaults(func=_cmd_bootstrap_plan)

    b_select = boot_sub.add_parser("select", help="pick the most confident images")
    b_select.add_argument("--predictions", required=True, help="YOLO prediction dir")
    b_select.add_argument("--k", type=int, required=True)
    b_select.add_argument("--aggregate", choices=("max", "mean"), default="max")
    b_select.add_argument("--candidates", help="restrict and report skipped ids")
    b_select.add_argument("--out")
    b_select.set_defaults(func=_cmd_bootstrap_select)

    b_run = boot_sub.add_parser("run", help="run or resume the labeling loop")
    b_run.add_argument("--plan", type=_plan_spec, required=True, help="seed=N,add=N,rounds=N")
    b_run.add_argument("--corpus", required=True, help="file listing one image id per line")
    b_run.add_argument("--seed-labels", required=True, help="directory of human YOLO labels")
    b_run.add_argument("--train-cmd", required=True, help="shell command with {train-dir}")
    b_run.add_argument(
        "--predict-cmd", required=True, help="shell command with {predict-list} and {out-dir}"
    )
    b_run.add_argument("--state", required=True, help="loop state directory")
    b_run.add_argument("--rng-seed", type=int, help="sample the seed set from the corpus")
    b_run.add_argument("--aggregate", choices=("max", "mean"), default="max")
    b_run.add_argument("--workdir", default=".", help="working directory for trainer commands")
    b_run.set_defaults(func=_cmd_bootstrap_run)

    p_convert = sub.add_parser("convert", help="translate between YOLO and COCO layouts")
    conv_sub = p_convert.add_subparsers(dest="subcommand", required=True)

    c_coco = conv_sub.add_parser("to-coco", help="YOLO label dir to COCO JSON")
    c_coco.add_argument("--labels", required=True)
    c_coco.add_argument("--sizes", required=True)
    c_coco.add_argument("--detections", action="store_true", help="6-field files, emit flat array")
    c_coco.add_argument("--out", required=True)
    c_coco.set_defaults(func=_cmd_convert, to="coco")

    c_yolo = conv_sub.add_parser("to-yolo", help="COCO ground truth to YOLO label dir")
    c_yolo.add_argument("--coco", required=True)
    c_yolo.add_argument("--out", required=True, help="output directory (sizes.txt included)")
    c_yolo.set_defaults(func=_cmd_convert, to="yolo")

    p_index = sub.add_parser("index-sizes", help="scan images into a size index")
    p_index.add_argument("--images", required=True)
    p_index.add_argument("--out", required=True)
    p_index.set_defaults(func=_cmd_index_sizes)

    p_serve = sub.add_parser("serve", help="run the review HTTP service")
    p_serve.add_argument(
        "--port", type=int, default=int(os.environ.get("HANDTRIAGE_PORT", "8000"))
    )
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--data-dir", required=True)
    p_serve.add_argument("--read-only", action="store_true")
    p_serve.add_argument("--ui-dir", help="static review UI build to serve at /")
    p_serve.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except HandTriageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
