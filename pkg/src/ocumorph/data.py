"""Dataset ingestion, subject pairing, preprocessing, and on-disk formats.

Manifest format: one line per image, `relative_path<TAB>subject_id<TAB>session_id`.
Landmark files: one JSON record per image with 66 floats in pixel coordinates
(x1, y1, ..., x33, y33) of the 256x256 preprocessed frame.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .landmarks import N_POINTS, LandmarkSet

IMAGE_SIZE = 256
RAW = "raw_0_255"
NORMALIZED = "normalized_minus1_1"


@dataclass
class OcularImage:
    pixels: np.ndarray  # HxWx3
    value_range: str = RAW
    subject_id: str = ""

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"expected HxWx3 pixels, got shape {px.shape}")
        if self.value_range not in (RAW, NORMALIZED):
            raise ValueError(f"unknown value_range {self.value_range!r}")
        self.pixels = px


@dataclass
class DatasetIndex:
    entries: list  # of (relative_path, subject_id, session_id)
    root: str

    def subjects(self) -> list:
        seen = {}
        for _, sid, _ in self.entries:
            seen.setdefault(sid, 0)
        return list(seen)

    def by_subject(self) -> dict:
        groups = {}
        for path, sid, sess in self.entries:
            groups.setdefault(sid, []).append((path, sess))
        return groups

    def __len__(self):
        return len(self.entries)


@dataclass
class MorphPair:
    path_a: str
    subject_a: str
    path_b: str
    subject_b: str
    alpha: float = 0.5

    def __post_init__(self):
        if self.subject_a == self.subject_b:
            raise ValueError("morph pair must combine two different subjects")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")


def load_dataset(root, manifest) -> DatasetIndex:
    """Parse a manifest into an index with deterministic ordering. Every listed
    file must exist; duplicate paths are rejected."""
    root = os.fspath(root)
    manifest = os.fspath(manifest)
    if not os.path.isfile(manifest):
        raise FileNotFoundError(f"manifest not found: {manifest}")
    entries = []
    seen = set()
    with open(manifest, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{manifest}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
            rel, subject, session = parts
            if rel in seen:
                raise ValueError(f"{manifest}:{lineno}: duplicate path {rel!r}")
            seen.add(rel)
            full = os.path.join(root, rel)
            if not os.path.isfile(full):
                raise FileNotFoundError(f"manifest references missing file: {full}")
            entries.append((rel, subject, session))
    return DatasetIndex(entries=entries, root=root)


def pair_subjects(index: DatasetIndex, policy: str = "all_cross", seed: int = 0, k: int = 0, alpha: float = 0.5):
    """Build cross-subject morph pairs.

    policy 'all_cross' pairs every image with every image of every other subject
    (unordered); 'random_k' draws k such pairs with a seeded RNG. Output is
    deterministic for a fixed seed.
    """
    groups = index.by_subject()
    subjects = sorted(groups)
    if len(subjects) < 2:
        raise ValueError("pairing requires at least 2 subjects")
    all_pairs = []
    for i, sa in enumerate(subjects):
        for sb in subjects[i + 1:]:
            for pa, _ in sorted(groups[sa]):
                for pb, _ in sorted(groups[sb]):
                    all_pairs.append(MorphPair(pa, sa, pb, sb, alpha))
    if policy == "all_cross":
        return all_pairs
    if policy == "random_k":
        if k <= 0:
            raise ValueError("random_k policy requires k > 0")
        rng = np.random.default_rng(seed)
        idx = rng.choice(len(all_pairs), size=min(k, len(all_pairs)), replace=False)
        return [all_pairs[i] for i in sorted(idx)]
    raise ValueError(f"unknown pairing policy {policy!r}")


def load_image(path, subject_id: str = "") -> OcularImage:
    with Image.open(path) as im:
        im = im.convert("RGB")
        px = np.asarray(im, dtype=np.float64)
    return OcularImage(px, RAW, subject_id)


def save_image(path, image: OcularImage) -> None:
    px = image.pixels
    if image.value_range == NORMALIZED:
        px = (px + 1.0) * 127.5
    px = np.clip(np.rint(px), 0, 255).astype(np.uint8)
    Image.fromarray(px).save(path, format="PNG")


def preprocess(image: OcularImage, augment: bool = False, seed: int = 0,
               landmarks: LandmarkSet | None = None):
    """Center-crop to square, resize to 256x256, map pixel values to [-1, 1].

    With augment=True a horizontal flip is applied with probability 0.5 (seeded);
    a provided landmark set is flipped consistently. Already-normalized 256x256
    input passes through unchanged (idempotence). Returns the image, or an
    (image, landmarks) tuple when landmarks are supplied.
    """
    px = np.asarray(image.pixels, dtype=np.float64)
    if px.ndim != 3 or px.shape[2] != 3:
        raise ValueError("preprocess expects a 3-channel image")
    h, w = px.shape[:2]
    lms = landmarks

    if image.value_range == NORMALIZED and (h, w) == (IMAGE_SIZE, IMAGE_SIZE) and not augment:
        out = OcularImage(px, NORMALIZED, image.subject_id)
        return (out, lms) if landmarks is not None else out

    if min(h, w) < 64:
        raise ValueError(f"image too small to preprocess: {h}x{w}")

    if image.value_range == NORMALIZED:
        px = (px + 1.0) * 127.5

    # center crop to square
    side = min(h, w)
    y0 = (h - side) // 2
    x0 = (w - side) // 2
    px = px[y0:y0 + side, x0:x0 + side]
    if lms is not None:
        lms = LandmarkSet(lms.points - np.array([x0, y0], dtype=np.float64),
                          out_of_frame=lms.out_of_frame)

    if side != IMAGE_SIZE:
        im = Image.fromarray(np.clip(np.rint(px), 0, 255).astype(np.uint8))
        px = np.asarray(im.resize((IMAGE_SIZE, IMAGE_SIZE), Image.BILINEAR), dtype=np.float64)
        if lms is not None:
            scale = IMAGE_SIZE / side
            lms = LandmarkSet(lms.points * scale, out_of_frame=lms.out_of_frame)

    if augment:
        rng = np.random.default_rng(seed)
        if rng.random() < 0.5:
            px = px[:, ::-1].copy()
            if lms is not None:
                lms = lms.flipped(IMAGE_SIZE)

    px = px / 127.5 - 1.0
    out = OcularImage(px, NORMALIZED, image.subject_id)
    if landmarks is not None:
        return out, lms
    return out


def write_landmarks(path, landmarks: LandmarkSet) -> None:
    record = {"points": np.asarray(landmarks.points, dtype=np.float64).reshape(-1).tolist()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh)
        fh.write("\n")


def read_landmarks(path) -> LandmarkSet:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            record = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"malformed landmark file {path}: {exc}") from exc
    flat = record.get("points")
    if not isinstance(flat, list) or len(flat) != 2 * N_POINTS:
        n = len(flat) // 2 if isinstance(flat, list) else 0
        raise ValueError(f"{path}: expected {N_POINTS} landmark points, got {n}")
    pts = np.asarray(flat, dtype=np.float64).reshape(N_POINTS, 2)
    # out-of-frame coordinates are legal (gaze-deviated eyes); flag, don't reject
    oof = bool(np.any(pts < 0) or np.any(pts >= IMAGE_SIZE))
    return LandmarkSet(pts, out_of_frame=oof)
