import numpy as np
import pytest

from ocumorph import data
from ocumorph.data import (
    IMAGE_SIZE,
    NORMALIZED,
    RAW,
    DatasetIndex,
    MorphPair,
    OcularImage,
    load_dataset,
    load_image,
    pair_subjects,
    preprocess,
    read_landmarks,
    save_image,
    write_landmarks,
)
from ocumorph.landmarks import LandmarkSet


def _write_manifest(tmp_path, rows, make_files=True):
    for rel, _, _ in rows:
        if make_files:
            p = tmp_path / rel
            p.parent.mkdir(parents=True, exist_ok=True)
            save_image(p, OcularImage(np.zeros((64, 64, 3)), RAW))
    manifest = tmp_path / "manifest.tsv"
    manifest.write_text("".join(f"{r}\t{s}\t{sess}\n" for r, s, sess in rows))
    return manifest


def test_load_dataset_roundtrip(tmp_path):
    rows = [("a/img0.png", "s1", "1"), ("a/img1.png", "s1", "2"), ("b/img2.png", "s2", "1")]
    manifest = _write_manifest(tmp_path, rows)
    index = load_dataset(tmp_path, manifest)
    assert len(index) == 3
    assert index.subjects() == ["s1", "s2"]
    assert set(index.by_subject()) == {"s1", "s2"}


def test_load_dataset_rejects_problems(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path, tmp_path / "missing.tsv")
    manifest = _write_manifest(tmp_path, [("x.png", "s1", "1")], make_files=False)
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path, manifest)
    manifest = _write_manifest(tmp_path, [("y.png", "s1", "1"), ("y.png", "s1", "2")])
    with pytest.raises(ValueError, match="duplicate"):
        load_dataset(tmp_path, manifest)
    (tmp_path / "bad.tsv").write_text("only_two\tfields\n")
    with pytest.raises(ValueError, match="3 tab-separated"):
        load_dataset(tmp_path, tmp_path / "bad.tsv")


def test_pairing_policies(tmp_path):
    rows = [("i0.png", "s1", "1"), ("i1.png", "s1", "2"),
            ("i2.png", "s2", "1"), ("i3.png", "s3", "1")]
    manifest = _write_manifest(tmp_path, rows)
    index = load_dataset(tmp_path, manifest)
    pairs = pair_subjects(index, "all_cross")
    # s1(2 imgs) x s2 + s1 x s3 + s2 x s3 = 2 + 2 + 1
    assert len(pairs) == 5
    assert all(p.subject_a != p.subject_b for p in pairs)
    k1 = pair_subjects(index, "random_k", seed=4, k=3)
    k2 = pair_subjects(index, "random_k", seed=4, k=3)
    assert [(p.path_a, p.path_b) for p in k1] == [(p.path_a, p.path_b) for p in k2]
    with pytest.raises(ValueError):
        pair_subjects(index, "random_k", k=0)
    with pytest.raises(ValueError):
        pair_subjects(index, "nearest")
    single = DatasetIndex([("i0.png", "s1", "1")], str(tmp_path))
    with pytest.raises(ValueError, match="2 subjects"):
        pair_subjects(single)


def test_morph_pair_validation():
    with pytest.raises(ValueError):
        MorphPair("a.png", "s1", "b.png", "s1")
    with pytest.raises(ValueError):
        MorphPair("a.png", "s1", "b.png", "s2", alpha=1.5)


def test_image_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    px = rng.integers(0, 256, (32, 48, 3)).astype(np.float64)
    path = tmp_path / "img.png"
    save_image(path, OcularImage(px, RAW))
    loaded = load_image(path)
    assert np.array_equal(loaded.pixels, px)


def test_preprocess_geometry_and_range():
    px = np.random.default_rng(1).integers(0, 256, (300, 400, 3)).astype(np.float64)
    out = preprocess(OcularImage(px, RAW))
    assert out.pixels.shape == (IMAGE_SIZE, IMAGE_SIZE, 3)
    assert out.value_range == NORMALIZED
    assert out.pixels.min() >= -1.0 and out.pixels.max() <= 1.0


def test_preprocess_idempotent():
    px = np.random.default_rng(2).uniform(-1, 1, (IMAGE_SIZE, IMAGE_SIZE, 3))
    once = preprocess(OcularImage(px, NORMALIZED))
    twice = preprocess(once)
    assert np.array_equal(once.pixels, twice.pixels)


def test_preprocess_rejects_tiny_images():
    with pytest.raises(ValueError, match="too small"):
        preprocess(OcularImage(np.zeros((32, 32, 3)), RAW))


def test_preprocess_flip_keeps_landmarks_consistent():
    rng = np.random.default_rng(3)
    px = rng.integers(0, 256, (IMAGE_SIZE, IMAGE_SIZE, 3)).astype(np.float64)
    lms = LandmarkSet(rng.uniform(10, 200, (33, 2)))
    # find a seed that flips
    for seed in range(20):
        if np.random.default_rng(seed).random() < 0.5:
            break
    out, out_lms = preprocess(OcularImage(px, RAW), augment=True, seed=seed, landmarks=lms)
    assert np.array_equal(out.pixels, px[:, ::-1] / 127.5 - 1.0)
    # the landmark labelled as iris center tracks the mirrored pixel column
    assert out_lms.points[18, 0] == pytest.approx((IMAGE_SIZE - 1) - lms.points[18, 0])


def test_landmark_file_roundtrip(tmp_path):
    pts = np.random.default_rng(4).uniform(0, 255, (33, 2))
    path = tmp_path / "lm.json"
    write_landmarks(path, LandmarkSet(pts))
    back = read_landmarks(path)
    assert np.array_equal(back.points, pts)  # exact float round-trip
    assert not back.out_of_frame


def test_landmark_file_out_of_frame_flag(tmp_path):
    pts = np.random.default_rng(5).uniform(0, 255, (33, 2))
    pts[0] = (-5.0, 10.0)
    path = tmp_path / "lm.json"
    write_landmarks(path, LandmarkSet(pts))
    assert read_landmarks(path).out_of_frame


def test_landmark_file_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    with pytest.raises(ValueError, match="malformed"):
        read_landmarks(bad)
    short = tmp_path / "short.json"
    short.write_text('{"points": [1.0, 2.0]}')
    with pytest.raises(ValueError, match="expected 33"):
        read_landmarks(short)


def test_ocular_image_validation():
    with pytest.raises(ValueError):
        OcularImage(np.zeros((10, 10)))
    with pytest.raises(ValueError):
        OcularImage(np.zeros((10, 10, 3)), "percent")
