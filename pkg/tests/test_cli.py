import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from boxlabel.cli import main
from boxlabel.dataio import (
    read_annotations,
    read_image,
    read_labelmap,
    read_manifest,
    write_labelmap,
)
from boxlabel.core import order_boxes
from boxlabel.weaklabels import rasterize_box_labels

SPEC = {"width": 32, "height": 32, "n_objects": 2, "color_separation": 80.0}


def tree_digest(directory, pattern="*.png"):
    digest = hashlib.sha256()
    for path in sorted(Path(directory).glob(pattern)):
        digest.update(path.name.encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()


@pytest.fixture(scope="session")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("dataset")
    spec_path = root / "spec.json"
    spec_path.write_text(json.dumps(SPEC))
    assert main(["synth", "--out", str(root / "data"), "--count", "3",
                 "--seed", "0", "--spec", str(spec_path)]) == 0
    return root / "data"


class TestSynth:
    def test_tree_layout(self, dataset):
        for sub in ("images", "annotations", "boundaries", "gt", "gt_instances",
                    "proposals"):
            assert (dataset / sub).is_dir()
        manifest = read_manifest(dataset / "manifest.json")
        assert len(manifest.entries) == 3

    def test_deterministic(self, dataset, tmp_path):
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps(SPEC))
        assert main(["synth", "--out", str(tmp_path / "data"), "--count", "3",
                     "--seed", "0", "--spec", str(spec_path)]) == 0
        assert tree_digest(tmp_path / "data" / "images") == tree_digest(dataset / "images")
        assert tree_digest(tmp_path / "data" / "gt") == tree_digest(dataset / "gt")


class TestGen:
    def test_box_matches_rasterizer(self, dataset, tmp_path):
        out = tmp_path / "box"
        assert main(["gen", "--method", "box", "--manifest",
                     str(dataset / "manifest.json"), "--out", str(out)]) == 0
        for entry in read_manifest(dataset / "manifest.json").entries:
            boxes, dims = read_annotations(entry.annotation_path)
            want = rasterize_box_labels(order_boxes(boxes, dims), dims)
            got = read_labelmap(out / f"{entry.name}.png")
            assert np.array_equal(got, want)

    def test_thread_count_does_not_change_output(self, dataset, tmp_path):
        args = ["gen", "--method", "grabcut", "--manifest",
                str(dataset / "manifest.json"), "--seed", "7"]
        assert main(args + ["--out", str(tmp_path / "a"), "--threads", "1"]) == 0
        assert main(args + ["--out", str(tmp_path / "b"), "--threads", "3"]) == 0
        assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")

    def test_grabcut_plus_uses_manifest_boundaries(self, dataset, tmp_path):
        out = tmp_path / "gp"
        assert main(["gen", "--method", "grabcut+", "--manifest",
                     str(dataset / "manifest.json"), "--out", str(out)]) == 0
        assert sorted(p.name for p in out.glob("*.png")) == \
            [f"scene_{i:04d}.png" for i in range(3)]

    def test_mgplus_without_proposals_exits_3(self, dataset, tmp_path, capsys):
        stripped = []
        with open(dataset / "manifest.json") as fh:
            for entry in json.load(fh)["entries"]:
                entry.pop("proposal_dir")
                stripped.append(entry)
        bare = dataset / "manifest_noprop.json"
        bare.write_text(json.dumps({"entries": stripped}))
        code = main(["gen", "--method", "mg+", "--manifest", str(bare),
                     "--out", str(tmp_path / "mg")])
        err = capsys.readouterr().err
        assert code == 3
        assert err.startswith("ERROR:3:")
        assert "--proposals" in err

    def test_unknown_method_exits_2(self, dataset, tmp_path, capsys):
        code = main(["gen", "--method", "florp", "--manifest",
                     str(dataset / "manifest.json"), "--out", str(tmp_path / "x")])
        assert code == 2
        assert capsys.readouterr().err.startswith("ERROR:2:")

    def test_metadata_written(self, dataset, tmp_path):
        out = tmp_path / "box"
        main(["gen", "--method", "box", "--manifest",
              str(dataset / "manifest.json"), "--out", str(out)])
        meta = json.loads((out / "metadata.json").read_text())
        assert meta["tool"] == "boxlabel"
        assert "input_digests" in meta


class TestDenoise:
    def test_outputs_confined_to_boxes(self, dataset, tmp_path):
        box_dir = tmp_path / "box"
        main(["gen", "--method", "box", "--manifest",
              str(dataset / "manifest.json"), "--out", str(box_dir)])
        out = tmp_path / "dn"
        assert main(["denoise", "--pred", str(box_dir), "--initial", str(box_dir),
                     "--manifest", str(dataset / "manifest.json"),
                     "--out", str(out), "--crf-iterations", "3"]) == 0
        for entry in read_manifest(dataset / "manifest.json").entries:
            labels = read_labelmap(out / f"{entry.name}.png")
            boxes, dims = read_annotations(entry.annotation_path)
            outside = np.ones(labels.shape, bool)
            for box in boxes:
                outside[box.slices()] = False
            assert not labels[outside].any()

    def test_bad_stage_exits_2(self, dataset, tmp_path, capsys):
        code = main(["denoise", "--pred", "x", "--initial", "x",
                     "--manifest", str(dataset / "manifest.json"),
                     "--out", str(tmp_path / "o"), "--stages", "1,9"])
        assert code == 2
        assert capsys.readouterr().err.startswith("ERROR:2:")


class TestEvalSemantic:
    def test_gt_against_itself(self, dataset, tmp_path, capsys):
        assert main(["eval", "semantic", "--pred", str(dataset / "gt"),
                     "--gt", str(dataset / "gt")]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["miou"] == 1.0

    def test_toy_miou(self, tmp_path, capsys):
        pred_dir = tmp_path / "pred"
        gt_dir = tmp_path / "gt"
        pred_dir.mkdir()
        gt_dir.mkdir()
        write_labelmap(np.array([[0, 1], [0, 1]], np.uint8), pred_dir / "a.png")
        write_labelmap(np.array([[0, 1], [1, 1]], np.uint8), gt_dir / "a.png")
        assert main(["eval", "semantic", "--pred", str(pred_dir),
                     "--gt", str(gt_dir)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["miou"] == pytest.approx(7 / 12)
        assert report["per_class"]["0"] == pytest.approx(0.5)
        assert report["per_class"]["1"] == pytest.approx(2 / 3)

    def test_out_file(self, dataset, tmp_path, capsys):
        out = tmp_path / "report.json"
        main(["eval", "semantic", "--pred", str(dataset / "gt"),
              "--gt", str(dataset / "gt"), "--out", str(out)])
        capsys.readouterr()
        assert json.loads(out.read_text())["miou"] == 1.0

    def test_missing_gt_dir_exits_3(self, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        code = main(["eval", "semantic", "--pred", str(empty), "--gt", str(empty)])
        assert code == 3
        assert capsys.readouterr().err.startswith("ERROR:3:")


class TestEvalInstance:
    def test_perfect_detections(self, dataset, tmp_path, capsys):
        images_dets = []
        images_gts = []
        for i in range(3):
            inst_dir = dataset / "gt_instances" / f"scene_{i:04d}"
            insts = json.loads((inst_dir / "instances.json").read_text())["instances"]
            rel = f"gt_instances/scene_{i:04d}"
            images_gts.append({"instances": [
                {"class_id": e["class_id"], "mask": f"{rel}/{e['mask']}"} for e in insts]})
            images_dets.append({"detections": [
                {"class_id": e["class_id"], "score": 0.9, "mask": f"{rel}/{e['mask']}"}
                for e in insts]})
        dets_path = dataset / "dets.json"
        gts_path = dataset / "gts.json"
        dets_path.write_text(json.dumps({"images": images_dets}))
        gts_path.write_text(json.dumps({"images": images_gts}))
        assert main(["eval", "instance", "--dets", str(dets_path),
                     "--gt", str(gts_path)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["mAP@0.5"] == 1.0
        assert report["mAP@0.75"] == 1.0
        assert report["ABO"] == 1.0


class TestRender:
    def test_all_background_is_unchanged(self, dataset, tmp_path):
        labels_dir = tmp_path / "labels"
        labels_dir.mkdir()
        manifest = read_manifest(dataset / "manifest.json")
        for entry in manifest.entries:
            img = read_image(entry.image_path)
            write_labelmap(np.zeros(img.shape[:2], np.uint8),
                           labels_dir / f"{entry.name}.png")
        out = tmp_path / "render"
        assert main(["render", "--labels", str(labels_dir), "--manifest",
                     str(dataset / "manifest.json"), "--out", str(out)]) == 0
        for entry in manifest.entries:
            assert np.array_equal(read_image(out / f"{entry.name}.png"),
                                  read_image(entry.image_path))

    def test_alpha_one_paints_pure_palette(self, dataset, tmp_path):
        from boxlabel.dataio import pascal_palette
        out = tmp_path / "render"
        assert main(["render", "--labels", str(dataset / "gt"), "--manifest",
                     str(dataset / "manifest.json"), "--out", str(out),
                     "--alpha", "1.0"]) == 0
        palette = pascal_palette()
        entry = read_manifest(dataset / "manifest.json").entries[0]
        labels = read_labelmap(dataset / "gt" / f"{entry.name}.png")
        rendered = read_image(out / f"{entry.name}.png")
        fg = labels != 0
        assert np.array_equal(rendered[fg], palette[labels[fg]])


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0


def test_no_command_exits_2(capsys):
    assert main([]) == 2
