"""Morph attack detection baselines: LPQ / BSIF / HOG texture descriptors,
pluggable classifier kinds, and APCER / BPCER / D-EER scoring.

Score convention everywhere: higher = more morph-like.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d
from sklearn.ensemble import RandomForestClassifier
from sklearn.svm import SVC

BONAFIDE = "bonafide"
MORPH = "morph"


@dataclass
class MadScoreSet:
    """(sample_id, label, score) records; labels are 'bonafide' or 'morph'."""
    records: list  # of (sample_id, label, score)

    def split(self):
        bona = np.array([s for _, lbl, s in self.records if lbl == BONAFIDE], dtype=np.float64)
        morph = np.array([s for _, lbl, s in self.records if lbl == MORPH], dtype=np.float64)
        if len(bona) == 0 or len(morph) == 0:
            raise ValueError("score set must contain both bonafide and morph samples")
        return bona, morph


def _as_gray(image) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3:
        img = img.mean(axis=2)
    if img.ndim != 2:
        raise ValueError("expected a grayscale or HxWx3 image")
    return img


def lpq_features(image, window: int = 7, decorrelate: bool = False) -> np.ndarray:
    """Local phase quantization: per-pixel 8-bit codes from the signs of the
    real/imaginary parts of four low-frequency STFT coefficients, histogrammed
    into 256 normalized bins. Whitening (decorrelation) is off by default."""
    img = _as_gray(image)
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be an odd integer >= 3")
    r = (window - 1) // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    f = 1.0 / window
    w0 = np.ones_like(x)
    w1 = np.exp(-2j * np.pi * f * x)
    # four lowest non-zero frequency pairs: (f,0), (0,f), (f,f), (f,-f)
    filters = [
        np.outer(w0, w1),
        np.outer(w1, w0),
        np.outer(w1, w1),
        np.outer(w1, np.conj(w1)),
    ]
    responses = [convolve2d(img, np.conj(k), mode="valid") for k in filters]
    if decorrelate:
        stacked = np.stack(
            [part for resp in responses for part in (resp.real.ravel(), resp.imag.ravel())])
        cov = np.cov(stacked)
        _, vecs = np.linalg.eigh(cov)
        whitened = vecs.T @ stacked
        parts = list(whitened)
    else:
        parts = [part for resp in responses for part in (resp.real.ravel(), resp.imag.ravel())]
    codes = np.zeros(parts[0].shape, dtype=np.int64)
    for bit, part in enumerate(parts):
        codes |= (part >= 0).astype(np.int64) << bit
    hist = np.bincount(codes, minlength=256).astype(np.float64)
    return hist / hist.sum()


def make_bsif_bank(n_filters: int = 8, size: int = 7, seed: int = 0) -> np.ndarray:
    """Bundled filter bank: seeded random zero-mean filters, orthonormalized.
    A fixed random-projection bank stands in for learned ICA filters."""
    if n_filters > 12:
        raise ValueError("at most 12 filters supported (12-bit codes)")
    rng = np.random.default_rng(seed)
    flat = rng.standard_normal((n_filters, size * size))
    flat -= flat.mean(axis=1, keepdims=True)
    q, _ = np.linalg.qr(flat.T)
    return q.T[:n_filters].reshape(n_filters, size, size)


def bsif_features(image, filter_bank=None) -> np.ndarray:
    """Binarized statistical image features: threshold each filter response at
    zero, pack bits into codes, histogram into 2^k normalized bins."""
    img = _as_gray(image)
    bank = make_bsif_bank() if filter_bank is None else np.asarray(filter_bank, dtype=np.float64)
    if bank.ndim != 3:
        raise ValueError("filter bank must be (k, h, w)")
    k = bank.shape[0]
    if k > 12:
        raise ValueError("at most 12 filters supported")
    codes = np.zeros((img.shape[0] - bank.shape[1] + 1,
                      img.shape[1] - bank.shape[2] + 1), dtype=np.int64)
    for bit in range(k):
        resp = convolve2d(img, bank[bit], mode="valid")
        codes |= (resp > 0).astype(np.int64) << bit
    hist = np.bincount(codes.ravel(), minlength=2 ** k).astype(np.float64)
    return hist / hist.sum()


def hog_features(image, cell: int = 8, block: int = 2, bins: int = 9) -> np.ndarray:
    """Histograms of oriented gradients: unsigned orientations, cell histograms
    with linear orientation interpolation, L2-normalized 2x2 cell blocks."""
    img = _as_gray(image)
    h, w = img.shape
    ncy, ncx = h // cell, w // cell
    if ncy < block or ncx < block:
        raise ValueError("image too small for the cell/block configuration")
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    gx[:, 1:-1] = img[:, 2:] - img[:, :-2]
    gy[1:-1, :] = img[2:, :] - img[:-2, :]
    mag = np.hypot(gx, gy)
    ang = np.rad2deg(np.arctan2(gy, gx)) % 180.0

    cells = np.zeros((ncy, ncx, bins))
    bin_width = 180.0 / bins
    pos = ang / bin_width - 0.5
    lo = np.floor(pos).astype(int)
    frac = pos - lo
    for cy in range(ncy):
        for cx in range(ncx):
            ys = slice(cy * cell, (cy + 1) * cell)
            xs = slice(cx * cell, (cx + 1) * cell)
            m = mag[ys, xs].ravel()
            l = lo[ys, xs].ravel()
            fr = frac[ys, xs].ravel()
            hist = np.bincount(l % bins, weights=m * (1 - fr), minlength=bins)
            hist += np.bincount((l + 1) % bins, weights=m * fr, minlength=bins)
            cells[cy, cx] = hist

    blocks = []
    for by in range(ncy - block + 1):
        for bx in range(ncx - block + 1):
            v = cells[by:by + block, bx:bx + block].ravel()
            norm = np.sqrt((v * v).sum() + 1e-12)
            blocks.append(v / norm if norm > 1e-6 else np.zeros_like(v))
    return np.concatenate(blocks)


def hog_descriptor_length(height: int, width: int, cell: int = 8, block: int = 2, bins: int = 9) -> int:
    ncy, ncx = height // cell, width // cell
    return (ncy - block + 1) * (ncx - block + 1) * block * block * bins


class Detector:
    """Wraps a fitted classifier behind the global higher-is-morph score convention."""

    def __init__(self, kind: str, model):
        self.kind = kind
        self.model = model

    def score(self, features) -> np.ndarray:
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if self.kind == "linear_margin":
            return self.model.decision_function(x)
        if self.kind == "tree_ensemble":
            return self.model.predict_proba(x)[:, 1]
        return np.asarray(self.model.score(x), dtype=np.float64)


def train_detector(features, labels, kind: str = "linear_margin", seed: int = 0,
                   deep_model=None) -> Detector:
    """Train a detector of the given kind ('linear_margin', 'tree_ensemble', or
    'deep'). Labels are 'bonafide'/'morph' strings or {0, 1} with 1 = morph."""
    y = np.array([1 if lbl in (MORPH, 1) else 0 for lbl in labels])
    if len(set(y)) < 2:
        raise ValueError("training set must contain both classes")
    x = np.asarray(features, dtype=np.float64)
    if kind == "linear_margin":
        model = SVC(kernel="linear", random_state=seed)
        model.fit(x, y)
    elif kind == "tree_ensemble":
        model = RandomForestClassifier(n_estimators=100, random_state=seed)
        model.fit(x, y)
    elif kind == "deep":
        if deep_model is None:
            raise ValueError("kind='deep' requires an injected model exposing score(features)")
        model = deep_model
    else:
        raise ValueError(f"unknown detector kind {kind!r}")
    return Detector(kind, model)


def apcer_bpcer(score_set: MadScoreSet, threshold: float):
    """APCER: morphs scored below the threshold (classified bonafide);
    BPCER: bonafide scored at or above it."""
    bona, morph = score_set.split()
    apcer = float(np.count_nonzero(morph < threshold)) / len(morph)
    bpcer = float(np.count_nonzero(bona >= threshold)) / len(bona)
    return apcer, bpcer


def _operating_points(score_set: MadScoreSet):
    """(apcer, bpcer) pairs swept over all distinct decision thresholds."""
    bona, morph = score_set.split()
    all_scores = np.unique(np.concatenate([bona, morph]))
    thresholds = np.concatenate([[-np.inf], all_scores, [np.nextafter(all_scores[-1], np.inf)]])
    pts = []
    for t in thresholds:
        pts.append((float(np.count_nonzero(morph < t)) / len(morph),
                    float(np.count_nonzero(bona >= t)) / len(bona)))
    return pts


def d_eer(score_set: MadScoreSet) -> float:
    """Detection equal error rate: where APCER crosses BPCER along the threshold
    sweep, linearly interpolating between adjacent operating points. Invariant
    under strictly monotone score transforms (rate-space interpolation)."""
    pts = _operating_points(score_set)
    prev_a, prev_b = pts[0]
    for a, b in pts[1:]:
        if a >= b:
            da, db = a - prev_a, b - prev_b
            denom = da - db
            if denom == 0:
                return (a + b) / 2.0
            t = (prev_b - prev_a) / denom
            return float(prev_a + t * da)
        prev_a, prev_b = a, b
    return (pts[-1][0] + pts[-1][1]) / 2.0


def bpcer_at_apcer(score_set: MadScoreSet, apcer_target: float = 0.05) -> float:
    """Lowest BPCER among operating points with APCER at or below the target."""
    pts = _operating_points(score_set)
    feasible = [b for a, b in pts if a <= apcer_target]
    if not feasible:
        return 1.0
    return float(min(feasible))
