"""Acceptance gate: the nine go/no-go checks, one printed verdict line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the verdict lines.
Each check asserts first and prints its PASS line only after surviving, so a
failure shows up both as a pytest failure and as a missing line.
"""

from __future__ import annotations

import json
import random
import sys
import time

import pytest

from handtriage.bootstrap import (
    BootstrapPlan,
    TrainerContract,
    make_human_pool,
    plan_rounds,
    pool_to_dict,
    run_loop,
    sample_seed,
)
from handtriage.cli import main
from handtriage.errors import TrainerCommandError
from handtriage.evaluator import EvalConfig, evaluate, render_fixed_table
from handtriage.formats import (
    Detection,
    coco_to_yolo_ground_truth,
    parse_yolo_labels,
    yolo_to_coco_ground_truth,
)
from handtriage.geometry import BBox, ImageSize
from handtriage.manifest import build_manifest, load_manifest, merge_manifests, save_manifest
from handtriage.triage import rethreshold, run_triage

from oracle import oracle_report
from scenes import as_objects, random_scene
from test_bootstrap import FLAKY_TRAIN_STUB, PREDICT_STUB, label_file

METRIC_KEYS = (
    "ap", "ap50", "ap75", "ap_small", "ap_medium", "ap_large",
    "ar1", "ar10", "ar100", "ar_small", "ar_medium", "ar_large",
)

PNG_BYTES = bytes.fromhex(
    "89504e470d0a1a0a0000000d494844520000000100000001080600000"
    "01f15c4890000000b4944415478da636460600000000600023081d02f"
    "0000000049454e44ae426082"
)


def verdict(number: int, detail: str) -> None:
    print(f"criterion {number}: PASS - {detail}")


def gt_obj(image_id, x, y, w, h):
    from handtriage.formats import GroundTruthBox

    return GroundTruthBox(image_id, BBox(x, y, w, h))


def det_obj(image_id, det_id, conf, x, y, w, h):
    return Detection(image_id, BBox(x, y, w, h), conf, det_id)


FIXTURE_GT = [("i", 0, 0, 10, 10), ("i", 20, 20, 10, 10)]
FIXTURE_DT = [("i", 1, 0.9, 0, 0, 10, 10), ("i", 2, 0.8, 50, 50, 10, 10)]


def test_criterion_1_oracle_equivalence():
    rng = random.Random(20260819)
    started = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        gts, dts = random_scene(rng, max_images=5, max_gt=4, max_dt=6)
        gt, dt = as_objects(gts, dts)
        report = evaluate(gt, dt).as_dict()
        expected = oracle_report(gts, dts)
        for key in METRIC_KEYS:
            assert report[key] is not None and expected[key] is not None
            diff = abs(report[key] - expected[key])
            worst = max(worst, diff)
            assert diff <= 1e-9, (key, report[key], expected[key])
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0
    verdict(1, f"200 scenes, 12 metrics each, worst diff {worst:.2e}, {elapsed:.2f}s")


def test_criterion_2_interpolation_fixture():
    gt = [gt_obj(*g) for g in FIXTURE_GT]
    dt = [det_obj(*d) for d in FIXTURE_DT]
    report = evaluate(gt, dt)
    assert report.ap50 == pytest.approx(51 / 101, abs=1e-12)
    assert report.ar1 == 0.5
    verdict(2, f"AP@.50 = {report.ap50:.15f} (51/101), AR1 = {report.ar1}")


def test_criterion_3_sentinels_for_empty_buckets():
    # Every ground-truth box is at least 96x96, so the small and medium
    # buckets are empty and their four metrics must render as -1.000.
    gt = [gt_obj(f"m/{i}", 0, 0, 100 + i, 100 + i) for i in range(6)]
    dt = [det_obj(f"m/{i}", i + 1, 0.9, 0, 0, 100 + i, 100 + i) for i in range(4)]
    report = evaluate(gt, dt)
    assert report.ap_small == -1.0
    assert report.ap_medium == -1.0
    assert report.ar_small == -1.0
    assert report.ar_medium == -1.0
    table = render_fixed_table(report)
    assert table.count("-1.000") == 4
    assert report.ap_large > 0
    verdict(3, "AP-S, AP-M, AR-S, AR-M all rendered -1.000; large bucket real")


def test_criterion_4_metric_properties():
    rng = random.Random(424242)
    checked = 0
    for _ in range(100):
        gts, dts = random_scene(rng)
        gt, dt = as_objects(gts, dts)
        if not gts:
            continue
        report = evaluate(gt, dt)

        assert report.ar1 <= report.ar10 + 1e-12
        assert report.ar10 <= report.ar100 + 1e-12
        assert report.ap <= report.ap50 + 1e-12

        cubed = [Detection(d.image_id, d.box, d.confidence**3, d.detection_id) for d in dt]
        rescaled = evaluate(gt, cubed)
        for key in METRIC_KEYS:
            assert report.as_dict()[key] == rescaled.as_dict()[key], key

        if dt:
            next_id = max(d.detection_id for d in dt) + 1
            doubled = list(dt) + [
                Detection(d.image_id, d.box, d.confidence, next_id + i)
                for i, d in enumerate(dt)
            ]
            assert evaluate(gt, doubled).ap <= report.ap + 1e-12
        checked += 1
    assert checked >= 80
    verdict(4, f"recall/precision ordering, cube rescaling, duplicate-TP on {checked} scenes")


def test_criterion_5_published_split_arithmetic():
    def synthetic(name, train, val, test, offset):
        ids = [f"{name}/{i:05d}" for i in range(offset, offset + train + val + test)]
        return build_manifest(
            {"train": ids[:train], "val": ids[train : train + val], "test": ids[train + val :]},
            name=name,
        )

    ego = synthetic("egohands", 3590, 335, 862, 0)
    hands11k = synthetic("11k", 8307, 775, 1994, 100_000)
    openimg = synthetic("openimages", 20_500, 1892, 4932, 200_000)

    assert hands11k.total == 11_076
    combined = merge_manifests([ego, hands11k, openimg], name="combined")
    assert combined.train == 32_397
    assert combined.val == 3_002
    assert combined.test == 7_788
    verdict(5, "combined 32397/3002/7788, second corpus sums to 11076")


def test_criterion_6_bootstrap_schedule_and_resume(tmp_path):
    plan = BootstrapPlan(seed_size=500, per_round=1000, rounds=2, corpus_size=11_076)
    steps = plan_rounds(plan)
    assert [s.train_size for s in steps] == [500, 1500, 2500]
    assert steps[-1].predict_size == 8576

    # The loop itself, exercised at desk scale with a deterministic stub
    # predictor: a clean pass and an interrupted-then-resumed pass must
    # leave byte-identical state trees.
    corpus = [f"c/{i:02d}" for i in range(30)]
    seed_pool = make_human_pool(
        {i: label_file(i) for i in sample_seed(corpus, 6, rng_seed=7)}
    )
    small = BootstrapPlan(6, 8, 2, 30)
    predict_script = tmp_path / "predict.py"
    predict_script.write_text(PREDICT_STUB)
    train_script = tmp_path / "train.py"
    train_script.write_text(FLAKY_TRAIN_STUB)
    fail_flag = tmp_path / "fail-once"
    predict_cmd = f"{sys.executable} {predict_script} {{predict-list}} {{out-dir}}"

    def contract(counter_name):
        return TrainerContract(
            train_cmd=(
                f"{sys.executable} {train_script} {{train-dir}} {fail_flag} "
                f"{tmp_path / counter_name}"
            ),
            predict_cmd=predict_cmd,
        )

    clean_state = tmp_path / "clean"
    pool_a, _ = run_loop(small, contract("count-a"), corpus, seed_pool, clean_state)

    flaky_state = tmp_path / "flaky"
    fail_flag.write_text("")
    with pytest.raises(TrainerCommandError):
        run_loop(small, contract("count-b"), corpus, seed_pool, flaky_state)
    assert (flaky_state / "round-0" / "pool.json").exists()
    assert not (flaky_state / "round-1" / "pool.json").exists()
    fail_flag.unlink()
    pool_b, _ = run_loop(small, contract("count-b"), corpus, seed_pool, flaky_state)

    assert pool_to_dict(pool_a) == pool_to_dict(pool_b)
    clean_files = sorted(p.relative_to(clean_state) for p in clean_state.rglob("*") if p.is_file())
    flaky_files = sorted(p.relative_to(flaky_state) for p in flaky_state.rglob("*") if p.is_file())
    assert clean_files == flaky_files
    compared = 0
    for rel in clean_files:
        assert (clean_state / rel).read_bytes() == (flaky_state / rel).read_bytes(), rel
        compared += 1
    verdict(
        6,
        f"schedule [500, 1500, 2500]/8576; resume at round 1 byte-identical "
        f"across {compared} state files",
    )


def triage_fixture(n_frames: int = 1000):
    """Synthetic corpus with analytically known per-frame areas.

    Frame k has max area (k * 97) % 50021, except every 17th frame which has
    no detections at all (area 0). Some frames carry extra smaller boxes so
    the max is doing real work.
    """
    frames = [f"fr{k:04d}" for k in range(n_frames)]
    known = {}
    detections = []
    det_id = 1
    for k, frame_id in enumerate(frames):
        if k % 17 == 0:
            known[frame_id] = 0.0
            continue
        area = float((k * 97) % 50021)
        known[frame_id] = area
        detections.append(Detection(frame_id, BBox(0, 0, 1, area), 0.9, det_id))
        det_id += 1
        if k % 3 == 0 and area > 2:
            detections.append(Detection(frame_id, BBox(0, 0, 1, area / 2), 0.8, det_id))
            det_id += 1
    return frames, known, detections


def test_criterion_7_triage_correctness_and_speed():
    started = time.perf_counter()
    frames, known, detections = triage_fixture(1000)
    run = run_triage(frames, detections, threshold=25_000)

    boundary = known["fr0123"]
    assert boundary > 0
    thresholds = [i * 2500.0 for i in range(19)] + [boundary]
    previous = None
    for t in sorted(thresholds):
        result = rethreshold(run, t)
        expected = {f for f in frames if known[f] > t}
        assert set(result.flagged_ids) == expected
        assert result.flagged == len(expected)
        if previous is not None:
            assert result.flagged <= previous
        previous = result.flagged
    assert "fr0123" not in rethreshold(run, boundary).flagged_ids
    elapsed = time.perf_counter() - started
    assert elapsed < 2.0
    verdict(7, f"1000 frames, 20 thresholds vs direct sets, boundary strict, {elapsed:.2f}s")


def test_criterion_8_format_round_trip_and_manifest_counts():
    rng = random.Random(8080)
    labels = {}
    sizes = {}
    image_ids = [f"img/{i:03d}" for i in range(100)]
    for image_id in image_ids:
        sizes[image_id] = ImageSize(rng.choice([640, 1280, 1600]), rng.choice([480, 720, 1200]))
        lines = []
        for _ in range(10):
            x0, x1 = sorted((rng.uniform(0.01, 0.99), rng.uniform(0.01, 0.99)))
            y0, y1 = sorted((rng.uniform(0.01, 0.99), rng.uniform(0.01, 0.99)))
            w, h = max(x1 - x0, 1e-3), max(y1 - y0, 1e-3)
            lines.append(f"0 {(x0 + x1) / 2:.6f} {(y0 + y1) / 2:.6f} {w:.6f} {h:.6f}")
        labels[image_id] = parse_yolo_labels("\n".join(lines), image_id=image_id)

    total_boxes = sum(len(lf.entries) for lf in labels.values())
    assert total_boxes == 1000

    doc = json.loads(json.dumps(yolo_to_coco_ground_truth(labels, sizes)))
    back, back_sizes = coco_to_yolo_ground_truth(doc)
    assert set(back) == set(labels)
    assert back_sizes == sizes
    worst = 0.0
    for image_id, original in labels.items():
        restored = back[image_id]
        assert len(restored.entries) == len(original.entries)
        for a, b in zip(original.entries, restored.entries):
            for pair in ((a.box.cx, b.box.cx), (a.box.cy, b.box.cy),
                         (a.box.w, b.box.w), (a.box.h, b.box.h)):
                worst = max(worst, abs(pair[0] - pair[1]))
                assert abs(pair[0] - pair[1]) <= 1e-6

    manifest = build_manifest(
        {"train": image_ids[:70], "val": image_ids[70:85], "test": image_ids[85:]},
        name="roundtrip",
    )
    assert (manifest.train, manifest.val, manifest.test) == (70, 15, 15)
    verdict(8, f"1000 boxes yolo-coco-yolo worst drift {worst:.2e}; manifest 70/15/15")


def test_criterion_9_cli_end_to_end(tmp_path, capsys):
    frames, known, detections = triage_fixture(120)
    frames_dir = tmp_path / "frames"
    frames_dir.mkdir()
    for frame_id in frames:
        (frames_dir / f"{frame_id}.png").write_bytes(PNG_BYTES)
    det_doc = [
        {"image_id": d.image_id, "category_id": 1,
         "bbox": [d.box.x, d.box.y, d.box.w, d.box.h], "score": d.confidence}
        for d in detections
    ]
    det_path = tmp_path / "detections.json"
    det_path.write_text(json.dumps(det_doc))

    out = tmp_path / "report.json"
    threshold = 25_000.0
    code = main(
        ["triage", "--frames", str(frames_dir), "--detections", str(det_path),
         "--threshold", str(threshold), "--out", str(out)]
    )
    assert code == 0
    expected_flagged = {f for f in frames if known[f] > threshold}
    report = json.loads(out.read_text())
    assert report["summary"] == {"flagged": len(expected_flagged), "total": len(frames)}
    flagged_json = {r["frame_id"] for r in report["frames"] if r["flagged"]}
    assert flagged_json == expected_flagged
    csv_lines = out.with_suffix(".csv").read_text().splitlines()
    assert len(csv_lines) == len(frames) + 1
    flagged_csv = {line.split(",")[0] for line in csv_lines[1:] if ",true," in line}
    assert flagged_csv == expected_flagged

    gt_doc = {
        "images": [{"id": 1, "file_name": "i", "width": 200, "height": 200}],
        "annotations": [
            {"id": 1, "image_id": 1, "category_id": 1, "bbox": [0, 0, 10, 10],
             "area": 100, "iscrowd": 0},
            {"id": 2, "image_id": 1, "category_id": 1, "bbox": [20, 20, 10, 10],
             "area": 100, "iscrowd": 0},
        ],
        "categories": [{"id": 1, "name": "hand", "supercategory": "person"}],
    }
    gt_path = tmp_path / "gt.json"
    gt_path.write_text(json.dumps(gt_doc))
    dt_path = tmp_path / "dt.json"
    dt_path.write_text(
        json.dumps(
            [
                {"image_id": "i", "category_id": 1, "bbox": [0, 0, 10, 10], "score": 0.9},
                {"image_id": "i", "category_id": 1, "bbox": [50, 50, 10, 10], "score": 0.8},
            ]
        )
    )
    eval_out = tmp_path / "eval.json"
    code = main(["eval", "--gt", str(gt_path), "--dt", str(dt_path), "--out", str(eval_out)])
    assert code == 0
    capsys.readouterr()
    eval_report = json.loads(eval_out.read_text())
    assert eval_report["metrics"]["ap50"] == pytest.approx(51 / 101, abs=1e-12)
    assert eval_report["metrics"]["ar1"] == 0.5
    verdict(9, "triage JSON+CSV match direct sets; eval emits the fixture report")
