"""End-to-end runs of the command-line surface."""

from __future__ import annotations

import base64
import json
import re

import pytest

from handtriage.cli import build_parser, main

PNG_BYTES = base64.b64decode(
    "iVBORw0KGgoAAAANSUhEUgAAAAEAAAABCAYAAAAfFcSJAAAAC0lEQVR42mNkYAAAAAYAAjCB0C8AAAAASUVORK5CYII="
)


def write_coco_gt(path, boxes, size=(200, 200)):
    """COCO document over string image ids; boxes = [(image_id, x, y, w, h)]."""
    image_ids = sorted({b[0] for b in boxes})
    id_of = {img: i + 1 for i, img in enumerate(image_ids)}
    doc = {
        "images": [
            {"id": id_of[img], "file_name": img, "width": size[0], "height": size[1]}
            for img in image_ids
        ],
        "annotations": [
            {
                "id": i + 1,
                "image_id": id_of[img],
                "category_id": 1,
                "bbox": [x, y, w, h],
                "area": w * h,
                "iscrowd": 0,
            }
            for i, (img, x, y, w, h) in enumerate(boxes)
        ],
        "categories": [{"id": 1, "name": "hand", "supercategory": "person"}],
    }
    path.write_text(json.dumps(doc))


def write_coco_dt(path, dets):
    """Flat detections array; dets = [(image_id, score, x, y, w, h)]."""
    doc = [
        {"image_id": img, "category_id": 1, "bbox": [x, y, w, h], "score": s}
        for img, s, x, y, w, h in dets
    ]
    path.write_text(json.dumps(doc))


class TestEval:
    def test_two_box_fixture(self, tmp_path, capsys):
        gt = tmp_path / "gt.json"
        dt = tmp_path / "dt.json"
        write_coco_gt(gt, [("i", 0, 0, 10, 10), ("i", 20, 20, 10, 10)])
        write_coco_dt(dt, [("i", 0.9, 0, 0, 10, 10), ("i", 0.8, 50, 50, 10, 10)])
        out = tmp_path / "report.json"
        code = main(["eval", "--gt", str(gt), "--dt", str(dt), "--out", str(out)])
        assert code == 0
        table = capsys.readouterr().out
        assert re.search(r"AP@\.50\s+0\.505", table)
        assert re.search(r"AR1\s+0\.500", table)
        report = json.loads(out.read_text())
        assert report["metrics"]["ap50"] == pytest.approx(51 / 101, abs=1e-12)
        assert report["metrics"]["ar1"] == 0.5

    def test_integer_image_ids_resolved_through_gt(self, tmp_path, capsys):
        gt = tmp_path / "gt.json"
        dt = tmp_path / "dt.json"
        write_coco_gt(gt, [("img-a", 0, 0, 10, 10)])
        dt.write_text(
            json.dumps([{"image_id": 1, "category_id": 1, "bbox": [0, 0, 10, 10], "score": 0.9}])
        )
        assert main(["eval", "--gt", str(gt), "--dt", str(dt)]) == 0
        assert re.search(r"AP@\.50\s+1\.000", capsys.readouterr().out)

    def test_custom_sweep_drops_fixed_thresholds(self, tmp_path, capsys):
        gt = tmp_path / "gt.json"
        dt = tmp_path / "dt.json"
        write_coco_gt(gt, [("i", 0, 0, 10, 10)])
        write_coco_dt(dt, [("i", 0.9, 0, 0, 10, 10)])
        code = main(
            ["eval", "--gt", str(gt), "--dt", str(dt), "--iou-min", "0.3", "--iou-max", "0.3"]
        )
        assert code == 0
        assert re.search(r"AP@\.50\s+n/a", capsys.readouterr().out)

    def test_missing_file_is_a_clean_error(self, tmp_path, capsys):
        code = main(["eval", "--gt", str(tmp_path / "nope.json"), "--dt", str(tmp_path)])
        assert code == 2
        assert "error:" in capsys.readouterr().err


class TestTriage:
    AREAS = {"f1": 900, "f2": 40_000, "f3": 30_000, "f4": 31_000}

    def setup_fixture(self, tmp_path):
        frames = tmp_path / "frames"
        frames.mkdir()
        for frame_id in self.AREAS:
            (frames / f"{frame_id}.png").write_bytes(PNG_BYTES)
        dt = tmp_path / "dt.json"
        write_coco_dt(dt, [(f, 0.9, 0, 0, 1, a) for f, a in sorted(self.AREAS.items())])
        return frames, dt

    def test_reports_and_summary(self, tmp_path, capsys):
        frames, dt = self.setup_fixture(tmp_path)
        out = tmp_path / "report.json"
        code = main(
            [
                "triage",
                "--frames", str(frames),
                "--detections", str(dt),
                "--threshold", "30000",
                "--out", str(out),
            ]
        )
        assert code == 0
        assert json.loads(capsys.readouterr().out) == {"flagged": 2, "total": 4}
        report = json.loads(out.read_text())
        assert report["summary"] == {"flagged": 2, "total": 4}
        assert [r["frame_id"] for r in report["frames"]] == ["f2", "f4", "f3", "f1"]
        csv_lines = out.with_suffix(".csv").read_text().splitlines()
        assert csv_lines[0] == "frame_id,area_px2,flagged,verdict,note"
        assert len(csv_lines) == 5

    def test_save_into_store(self, tmp_path):
        frames, dt = self.setup_fixture(tmp_path)
        data_dir = tmp_path / "data"
        data_dir.mkdir()
        main(
            [
                "triage",
                "--frames", str(frames),
                "--detections", str(dt),
                "--threshold", "30000",
                "--out", str(tmp_path / "r.json"),
                "--data-dir", str(data_dir),
            ]
        )
        from handtriage.store import RunStore

        runs = RunStore(data_dir).list_runs()
        assert len(runs) == 1
        assert runs[0].flagged_count == 2


class TestBootstrapCli:
    def test_plan_schedule(self, tmp_path, capsys):
        code = main(
            [
                "bootstrap", "plan",
                "--plan", "seed=500,add=1000,rounds=2",
                "--corpus-size", "11076",
            ]
        )
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["final_train_size"] == 2500
        assert doc["schedule"] == [
            {"round": 0, "train_size": 500, "predict_size": 10576},
            {"round": 1, "train_size": 1500, "predict_size": 9576},
            {"round": 2, "train_size": 2500, "predict_size": 8576},
        ]

    def test_plan_overflow_reported(self, tmp_path, capsys):
        code = main(
            ["bootstrap", "plan", "--plan", "seed=5,add=10,rounds=2", "--corpus-size", "8"]
        )
        assert code == 2
        assert "corpus" in capsys.readouterr().err

    def test_bad_plan_spec_rejected(self):
        with pytest.raises(SystemExit):
            main(["bootstrap", "plan", "--plan", "seed=5,extra=1", "--corpus-size", "10"])

    def test_select_ranks_by_confidence(self, tmp_path, capsys):
        preds = tmp_path / "preds"
        preds.mkdir()
        (preds / "a.txt").write_text("0 0.5 0.5 0.2 0.2 0.99\n")
        (preds / "b.txt").write_text("0 0.5 0.5 0.2 0.2 0.42\n")
        (preds / "c.txt").write_text("0 0.5 0.5 0.2 0.2 0.87\n")
        out = tmp_path / "sel.json"
        code = main(
            ["bootstrap", "select", "--predictions", str(preds), "--k", "2", "--out", str(out)]
        )
        assert code == 0
        assert json.loads(capsys.readouterr().out) == ["a", "c"]
        doc = json.loads(out.read_text())
        assert doc["scores"]["a"] == 0.99

    def test_run_small_loop(self, tmp_path, capsys):
        import sys as _sys

        corpus_ids = [f"c{i:02d}" for i in range(8)]
        corpus = tmp_path / "corpus.txt"
        corpus.write_text("".join(f"{i}\n" for i in corpus_ids))
        seed_dir = tmp_path / "seed"
        seed_dir.mkdir()
        for image_id in corpus_ids[:2]:
            (seed_dir / f"{image_id}.txt").write_text("0 0.5 0.5 0.2 0.2\n")
        stub = tmp_path / "predict.py"
        stub.write_text(
            "import sys, pathlib\n"
            "ids = pathlib.Path(sys.argv[1]).read_text().split()\n"
            "out = pathlib.Path(sys.argv[2])\n"
            "for i in ids:\n"
            "    (out / (i + '.txt')).write_text('0 0.5 0.5 0.25 0.25 0.9\\n')\n"
        )
        code = main(
            [
                "bootstrap", "run",
                "--plan", "seed=2,add=3,rounds=1",
                "--corpus", str(corpus),
                "--seed-labels", str(seed_dir),
                "--train-cmd", "test -d {train-dir}",
                "--predict-cmd", f"{_sys.executable} {stub} {{predict-list}} {{out-dir}}",
                "--state", str(tmp_path / "state"),
            ]
        )
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary == {"labeled": 8, "human": 2, "pseudo": 6, "rounds_completed": 2}


class TestConvert:
    def test_yolo_coco_round_trip(self, tmp_path):
        labels = tmp_path / "labels"
        labels.mkdir()
        (labels / "img1.txt").write_text("0 0.5 0.5 0.25 0.5\n")
        (labels / "img2.txt").write_text("")
        sizes = tmp_path / "sizes.txt"
        sizes.write_text("img1 1600 1200\nimg2 640 480\n")
        coco = tmp_path / "gt.json"
        assert (
            main(
                [
                    "convert", "to-coco",
                    "--labels", str(labels),
                    "--sizes", str(sizes),
                    "--out", str(coco),
                ]
            )
            == 0
        )
        doc = json.loads(coco.read_text())
        assert len(doc["images"]) == 2
        assert doc["annotations"][0]["bbox"] == [600, 300, 400, 600]

        back = tmp_path / "back"
        assert main(["convert", "to-yolo", "--coco", str(coco), "--out", str(back)]) == 0
        assert (back / "img1.txt").read_text() == "0 0.5 0.5 0.25 0.5\n"
        assert (back / "img2.txt").read_text() == ""
        assert "img1 1600 1200" in (back / "sizes.txt").read_text()


class TestIndexSizes:
    def test_scans_png(self, tmp_path, capsys):
        images = tmp_path / "imgs"
        images.mkdir()
        (images / "shot.png").write_bytes(PNG_BYTES)
        out = tmp_path / "sizes.txt"
        code = main(["index-sizes", "--images", str(images), "--out", str(out)])
        assert code == 0
        assert out.read_text() == "shot 1 1\n"
        assert "indexed 1 images" in capsys.readouterr().out


class TestServeParser:
    def test_port_flag_and_env(self, monkeypatch):
        args = build_parser().parse_args(["serve", "--data-dir", "d", "--port", "9001"])
        assert args.port == 9001
        assert args.read_only is False
        monkeypatch.setenv("HANDTRIAGE_PORT", "7777")
        args = build_parser().parse_args(["serve", "--data-dir", "d"])
        assert args.port == 7777

    def test_read_only_flag(self):
        args = build_parser().parse_args(["serve", "--data-dir", "d", "--read-only"])
        assert args.read_only is True
