"""Shared synthetic fixtures: procedurally drawn eye-like images with exact
landmark labels, so every test runs without any external dataset."""

import numpy as np
import pytest

from ocumorph.landmarks import N_POINTS


def draw_eye(size, cx, cy, r, rng=None, bg=-0.2, iris_color=None):
    """A flat background with a filled iris disk and a lighter sclera ring."""
    rng = rng or np.random.default_rng(0)
    img = np.full((size, size, 3), bg, dtype=np.float32)
    yy, xx = np.mgrid[0:size, 0:size]
    d2 = (xx - cx) ** 2 + (yy - cy) ** 2
    sclera = d2 < (1.8 * r) ** 2
    img[sclera] = 0.6
    iris = d2 < r * r
    img[iris] = iris_color if iris_color is not None else rng.uniform(-0.8, 0.0, 3)
    return img


def eye_landmarks(size, cx, cy, r):
    """33 labeled points for a synthetic eye: lid contour on the sclera ring,
    iris boundary/center on the disk, extension ring further out."""
    pts = np.zeros((N_POINTS, 2))
    # eye contour: 14 points on the sclera ellipse (wider than tall)
    th = np.linspace(0, 2 * np.pi, 14, endpoint=False)
    pts[0:14, 0] = cx + 1.8 * r * np.cos(th)
    pts[0:14, 1] = cy + 1.2 * r * np.sin(th)
    # iris boundary left/top/right/bottom + center
    pts[14] = (cx - r, cy)
    pts[15] = (cx, cy - r)
    pts[16] = (cx + r, cy)
    pts[17] = (cx, cy + r)
    pts[18] = (cx, cy)
    # periocular extension ring
    th = np.linspace(0, 2 * np.pi, 14, endpoint=False)
    pts[19:33, 0] = cx + 2.4 * r * np.cos(th)
    pts[19:33, 1] = cy + 1.8 * r * np.sin(th)
    return np.clip(pts, 0, size - 1)


def synthetic_eye_set(n, size, seed=0):
    """(images, points) arrays of n random synthetic eyes."""
    rng = np.random.default_rng(seed)
    imgs = np.zeros((n, size, size, 3), dtype=np.float32)
    pts = np.zeros((n, N_POINTS, 2))
    for i in range(n):
        cx, cy = rng.uniform(size * 0.4, size * 0.6, 2)
        r = rng.uniform(size * 0.10, size * 0.16)
        imgs[i] = draw_eye(size, cx, cy, r, rng)
        pts[i] = eye_landmarks(size, cx, cy, r)
    return imgs, pts


@pytest.fixture(scope="session")
def eye_set_64():
    return synthetic_eye_set(8, 64, seed=0)
