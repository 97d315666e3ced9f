import csv
import json
import os

import numpy as np
import pytest

from ocumorph import cli, data
from ocumorph.data import IMAGE_SIZE, OcularImage, RAW, save_image, write_landmarks
from ocumorph.landmarks import LandmarkSet
from ocumorph.metrics import Ellipse, rasterize_ellipse
from conftest import draw_eye, eye_landmarks


@pytest.fixture(scope="module")
def fixture_dataset(tmp_path_factory):
    """6 tiny images across 3 subjects with landmark labels, manifest, pairs."""
    root = tmp_path_factory.mktemp("dataset")
    img_dir = root / "images"
    lm_dir = root / "landmarks"
    img_dir.mkdir()
    lm_dir.mkdir()
    rng = np.random.default_rng(0)
    rows = []
    for i in range(6):
        subject = f"s{i // 2}"
        cx, cy = rng.uniform(100, 156, 2)
        r = rng.uniform(28, 40)
        img = draw_eye(IMAGE_SIZE, cx, cy, r, rng)
        name = f"eye_{i}.png"
        save_image(img_dir / name, OcularImage((img + 1.0) * 127.5, RAW))
        write_landmarks(lm_dir / f"eye_{i}.json",
                        LandmarkSet(eye_landmarks(IMAGE_SIZE, cx, cy, r)))
        rows.append(f"images/{name}\t{subject}\t{i % 2}")
    (root / "manifest.tsv").write_text("".join(r + "\n" for r in rows))
    pairs = root / "pairs.tsv"
    pairs.write_text(f"{img_dir}/eye_0.png\t{img_dir}/eye_2.png\n"
                     f"{img_dir}/eye_1.png\t{img_dir}/eye_4.png\n")
    return root


def _run(argv):
    return cli.main(argv)


def test_usage_errors_exit_2(capsys):
    assert _run([]) == 2
    assert _run(["landmarks"]) == 2
    assert _run(["morph", "teleport"]) == 2
    capsys.readouterr()


def test_runtime_errors_exit_1(tmp_path, capsys):
    rc = _run(["morph", "classical", "--pairs", str(tmp_path / "nope.tsv"),
               "--landmark-dir", str(tmp_path), "--out", str(tmp_path / "out")])
    assert rc == 1
    capsys.readouterr()


def test_landmarks_train_and_predict(fixture_dataset, tmp_path):
    out = tmp_path / "lm_train"
    rc = _run(["landmarks", "train",
               "--root", str(fixture_dataset),
               "--manifest", str(fixture_dataset / "manifest.tsv"),
               "--landmark-dir", str(fixture_dataset / "landmarks"),
               "--epochs", "2", "--out", str(out)])
    assert rc == 0
    assert (out / "landmark_model.ckpt").exists()
    assert (out / "resolved_config.json").exists()
    summary = json.loads((out / "train_summary.json").read_text())
    assert len(summary["mse_log"]) == 2

    pred_out = tmp_path / "lm_pred"
    rc = _run(["landmarks", "predict", "--model", str(out / "landmark_model.ckpt"),
               "--in", str(fixture_dataset / "images"), "--out", str(pred_out)])
    assert rc == 0
    written = json.loads((pred_out / "predict_summary.json").read_text())["written"]
    assert written == 6
    pred = data.read_landmarks(pred_out / "eye_0.json")
    assert pred.points.shape == (33, 2)


def test_morph_classical_writes_manifest(fixture_dataset, tmp_path):
    out = tmp_path / "morphs"
    rc = _run(["morph", "classical",
               "--pairs", str(fixture_dataset / "pairs.tsv"),
               "--landmark-dir", str(fixture_dataset / "landmarks"),
               "--out", str(out)])
    assert rc == 0
    manifest = json.loads((out / "morph_manifest.json").read_text())
    assert len(manifest) == 2
    assert all((out / row["morph"]).exists() for row in manifest)
    assert manifest[0]["method"] == "classical"


def test_train_gan_dry_run(fixture_dataset, tmp_path):
    out = tmp_path / "gan"
    cfg = tmp_path / "train.cfg"
    cfg.write_text("batch_size = 2\nepochs = 1\nndf = 8\nngf = 8\n")
    rc = _run(["train", "gan", "--config", str(cfg), "--image-size", "64",
               "--dry-run", "--out", str(out)])
    assert rc == 0
    dry = json.loads((out / "dry_run.json").read_text())
    assert dry["status"] == "ok"
    assert dry["config"]["net"]["image_size"] == 64
    assert dry["config"]["batch_size"] == 2


def test_eval_vulnerability_report(tmp_path):
    out = tmp_path / "vuln"
    scores = tmp_path / "scores.csv"
    with open(scores, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["morph_id", "subject", "probe_id", "score"])
        for mid, sa, sb in (("m0", 0.9, 0.8), ("m1", 0.2, 0.9)):
            w.writerow([mid, "a", "p0", sa])
            w.writerow([mid, "b", "p0", sb])
    impostors = tmp_path / "impostors.txt"
    impostors.write_text("".join(f"{v}\n" for v in np.linspace(0, 0.5, 200)))
    rc = _run(["eval", "vulnerability", "--scores", str(scores),
               "--impostors", str(impostors), "--fmr", "0.01", "0.1",
               "--out", str(out)])
    assert rc == 0
    report = json.loads((out / "vulnerability_report.json").read_text())
    assert len(report["operating_points"]) == 2
    op = report["operating_points"][0]
    assert set(op) == {"fmr", "threshold", "mmpmr", "fmmpmr"}
    assert op["fmmpmr"] <= op["mmpmr"]


def test_eval_mad_report(tmp_path):
    out = tmp_path / "mad"
    scores = tmp_path / "mad_scores.csv"
    rng = np.random.default_rng(1)
    with open(scores, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "label", "score"])
        for i, v in enumerate(rng.normal(0, 1, 40)):
            w.writerow([f"b{i}", "bonafide", v])
        for i, v in enumerate(rng.normal(2, 1, 40)):
            w.writerow([f"m{i}", "morph", v])
    rc = _run(["eval", "mad", "--scores", str(scores), "--out", str(out)])
    assert rc == 0
    report = json.loads((out / "mad_report.json").read_text())
    assert 0.0 <= report["d_eer"] <= 0.5
    assert report["threshold_table"]
    assert "bpcer_at_5pct_apcer" in report


def test_pipeline_end_to_end(fixture_dataset, tmp_path):
    """landmarks -> classical morph -> gan dry-run -> eval quality, all exit 0."""
    morph_out = tmp_path / "morphs"
    assert _run(["morph", "classical",
                 "--pairs", str(fixture_dataset / "pairs.tsv"),
                 "--landmark-dir", str(fixture_dataset / "landmarks"),
                 "--seamless", "--out", str(morph_out)]) == 0

    # landmark files and iris masks for the generated morphs
    lm_dir = fixture_dataset / "landmarks"
    mask_dir = tmp_path / "masks"
    mask_dir.mkdir()
    manifest = json.loads((morph_out / "morph_manifest.json").read_text())
    for row in manifest:
        base = os.path.splitext(row["morph"])[0]
        la = data.read_landmarks(lm_dir / (os.path.splitext(
            os.path.basename(row["image_a"]))[0] + ".json"))
        lb = data.read_landmarks(lm_dir / (os.path.splitext(
            os.path.basename(row["image_b"]))[0] + ".json"))
        mid = LandmarkSet(0.5 * (la.points + lb.points))
        data.write_landmarks(lm_dir / (base + ".json"), mid)
        cx, cy = mid.points[18]
        r = float(np.linalg.norm(mid.points[16] - mid.points[14]) / 2.0)
        mask = rasterize_ellipse(Ellipse(cx, cy, r, 0.9 * r, 0.2), IMAGE_SIZE, IMAGE_SIZE)
        save_image(mask_dir / (base + ".png"),
                   OcularImage(np.repeat(mask[..., None] * 255.0, 3, axis=2), RAW))

    out = tmp_path / "quality"
    assert _run(["eval", "quality",
                 "--morph-manifest", str(morph_out / "morph_manifest.json"),
                 "--landmark-dir", str(lm_dir),
                 "--mask-dir", str(mask_dir),
                 "--out", str(out)]) == 0
    report = json.loads((out / "quality_report.json").read_text())
    assert report["gaze_formula_version"] == "segment-distance-v1"
    assert len(report["per_morph"]) == 2
    for entry in report["per_morph"]:
        assert 0.0 <= entry["gaze"] <= 1.0
        assert 0.0 <= entry["iris_irregularity"] <= 1.0
        assert -1.0 <= entry["ssim_a"] <= 1.0
    assert report["aggregates"]["mean_iris_irregularity"] > 0.9


def test_train_mad_cli(tmp_path):
    out = tmp_path / "mad_train"
    feats = tmp_path / "features.csv"
    rng = np.random.default_rng(2)
    with open(feats, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "label", "f0", "f1"])
        for i in range(20):
            label = "bonafide" if i % 2 == 0 else "morph"
            shift = 0.0 if i % 2 == 0 else 2.0
            w.writerow([f"x{i}", label, rng.normal(shift), rng.normal(shift)])
    rc = _run(["train", "mad", "--features", str(feats), "--kind", "linear_margin",
               "--out", str(out)])
    assert rc == 0
    assert (out / "detector.pkl").exists()
