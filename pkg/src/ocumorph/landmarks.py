"""Ocular landmark set: layout table, subset selection, Gaussian heatmaps, and the
CNN coordinate regressor.

The toolkit works with 33 named 2-D points (66 scalars) per eye image, laid out as:

    indices  0-13   eye contour    (0 = outer corner, 1-6 upper lid, 7 = inner corner,
                                    8-13 lower lid, walking back toward the outer corner)
    indices 14-17   iris boundary  (14 = left, 15 = top, 16 = right, 17 = bottom)
    index   18      iris center
    indices 19-32   periocular extension ring (same walk order as the eye contour,
                                    19 = outer, 26 = inner)

The 19 "core" points (eye contour + iris group) drive heatmap conditioning and the
classical morph pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

N_POINTS = 33
N_CORE = 19

EYE_IDX = tuple(range(0, 14))
IRIS_BOUNDARY_IDX = (14, 15, 16, 17)
IRIS_CENTER_IDX = 18
IRIS_IDX = (14, 15, 16, 17, 18)
EXTENSION_IDX = tuple(range(19, 33))
CORE_IDX = EYE_IDX + IRIS_IDX

# index pairs swapped by a horizontal flip (left/right symmetric points)
FLIP_PAIRS = (
    (0, 7), (1, 6), (2, 5), (3, 4), (8, 13), (9, 12), (10, 11),
    (14, 16),
    (19, 26), (20, 25), (21, 24), (22, 23), (27, 32), (28, 31), (29, 30),
)

CHECKPOINT_MAGIC = "ocumorph-landmark-v1"


@dataclass
class LandmarkSet:
    """33 ordered (x, y) points in pixel coordinates of the preprocessed frame."""

    points: np.ndarray  # (33, 2) float64
    out_of_frame: bool = field(default=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.shape != (N_POINTS, 2):
            raise ValueError(f"expected {N_POINTS} points, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("landmark coordinates must be finite")
        self.points = pts

    def core_points(self) -> np.ndarray:
        return self.points[list(CORE_IDX)]

    def iris_center(self) -> np.ndarray:
        return self.points[IRIS_CENTER_IDX]

    def flipped(self, width: int) -> "LandmarkSet":
        """Mirror about the vertical axis of a `width`-pixel frame, swapping the
        left/right point pairs so labels stay consistent with a flipped image."""
        pts = self.points.copy()
        pts[:, 0] = (width - 1) - pts[:, 0]
        for i, j in FLIP_PAIRS:
            pts[[i, j]] = pts[[j, i]]
        return LandmarkSet(pts, out_of_frame=self.out_of_frame)


def select_landmarks(landmarks: LandmarkSet, mode, custom_mask=None) -> np.ndarray:
    """Return the point subset for `mode` in {'center','iris','eye','extension','custom'}."""
    if mode == "center":
        idx = [IRIS_CENTER_IDX]
    elif mode == "iris":
        idx = list(IRIS_IDX)
    elif mode == "eye":
        idx = list(EYE_IDX)
    elif mode == "extension":
        idx = list(EXTENSION_IDX)
    elif mode == "custom":
        if custom_mask is None:
            raise ValueError("custom mode requires a mask")
        mask = np.asarray(custom_mask, dtype=bool)
        if mask.shape != (N_POINTS,):
            raise ValueError(f"custom mask must have length {N_POINTS}")
        if not mask.any():
            raise ValueError("custom mask selects no landmarks")
        idx = np.flatnonzero(mask).tolist()
    else:
        raise ValueError(f"unknown selection mode: {mode!r}")
    return landmarks.points[idx].copy()


def render_heatmaps(points: np.ndarray, height: int, width: int, sigma: float = 5.0) -> np.ndarray:
    """Gaussian spatial priors, one channel per point.

    map_i(p) = exp(-||p - l_i||^2 / (2 sigma^2)); peak value 1.0 when the point
    sits on the pixel grid. Points outside the frame produce valid maps with
    peak < 1.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    ys = np.arange(height, dtype=np.float64)[:, None]
    xs = np.arange(width, dtype=np.float64)[None, :]
    maps = np.empty((len(pts), height, width), dtype=np.float64)
    for i, (px, py) in enumerate(pts):
        d2 = (xs - px) ** 2 + (ys - py) ** 2
        maps[i] = np.exp(-d2 / (2.0 * sigma * sigma))
    return maps


@dataclass
class LgConfig:
    """Architecture knobs for the landmark coordinate regressor."""

    image_size: int = 256
    conv_channels: tuple = (32, 64)
    fc_widths: tuple = (512, 128)
    pooled_size: int = 8  # adaptive pooling ahead of the fully connected stack


class LandmarkRegressor(nn.Module):
    """Two conv blocks (conv 3x3 -> ReLU -> max-pool 2x2), then two fully connected
    layers and a 66-neuron output head. Coordinates are regressed in frame-relative
    units (pixel / image_size)."""

    def __init__(self, config: LgConfig | None = None):
        super().__init__()
        self.config = config or LgConfig()
        c1, c2 = self.config.conv_channels
        f1, f2 = self.config.fc_widths
        self.features = nn.Sequential(
            nn.Conv2d(3, c1, 3, padding=1), nn.ReLU(inplace=True), nn.MaxPool2d(2),
            nn.Conv2d(c1, c2, 3, padding=1), nn.ReLU(inplace=True), nn.MaxPool2d(2),
        )
        self.pool = nn.AdaptiveAvgPool2d(self.config.pooled_size)
        flat = c2 * self.config.pooled_size ** 2
        self.head = nn.Sequential(
            nn.Linear(flat, f1), nn.ReLU(inplace=True),
            nn.Linear(f1, f2), nn.ReLU(inplace=True),
            nn.Linear(f2, 2 * N_POINTS),
        )

    def forward(self, x):
        h = self.pool(self.features(x))
        return self.head(h.flatten(1))


def _image_batch(images) -> torch.Tensor:
    """Stack preprocessed images into an NCHW float tensor."""
    arrs = []
    for img in images:
        a = np.asarray(img.pixels if hasattr(img, "pixels") else img, dtype=np.float32)
        if a.ndim != 3 or a.shape[2] != 3:
            raise ValueError("expected HxWx3 image")
        arrs.append(np.transpose(a, (2, 0, 1)))
    return torch.from_numpy(np.stack(arrs))


def predict_landmarks(model: LandmarkRegressor, image) -> LandmarkSet:
    """Run the regressor on one preprocessed, normalized image."""
    value_range = getattr(image, "value_range", None)
    if value_range is not None and value_range != "normalized_minus1_1":
        raise ValueError("predict_landmarks requires a normalized image (run preprocess first)")
    model.eval()
    with torch.no_grad():
        out = model(_image_batch([image]))[0].numpy().astype(np.float64)
    pts = out.reshape(N_POINTS, 2) * model.config.image_size
    return LandmarkSet(pts)


def train_landmark_model(
    images,
    landmark_sets,
    config: LgConfig | None = None,
    epochs: int = 200,
    lr: float = 2e-3,
    lr_gamma: float = 0.995,
    seed: int = 0,
):
    """Fit the regressor with MSE loss, Adam, and exponential LR decay.

    Returns (model, mse_log) where mse_log holds the per-epoch training MSE in
    squared pixels.
    """
    if len(images) == 0:
        raise ValueError("empty training set")
    if len(images) != len(landmark_sets):
        raise ValueError("images and landmark sets differ in length")
    config = config or LgConfig()
    torch.manual_seed(seed)
    model = LandmarkRegressor(config)
    x = _image_batch(images)
    scale = float(config.image_size)
    pts = np.stack([ls.points if hasattr(ls, "points") else np.asarray(ls, dtype=np.float64)
                    for ls in landmark_sets])
    y = torch.from_numpy(pts.astype(np.float32).reshape(len(images), -1) / scale)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    sched = torch.optim.lr_scheduler.ExponentialLR(opt, gamma=lr_gamma)
    mse_log = []
    model.train()
    for _ in range(epochs):
        opt.zero_grad()
        pred = model(x)
        loss = torch.mean((pred - y) ** 2)
        loss.backward()
        opt.step()
        sched.step()
        mse_log.append(float(loss.detach()) * scale * scale)
    return model, mse_log


def save_landmark_model(path, model: LandmarkRegressor) -> None:
    payload = {
        "magic": CHECKPOINT_MAGIC,
        "config": model.config.__dict__,
        "state": model.state_dict(),
    }
    torch.save(payload, path)


def load_landmark_model(path) -> LandmarkRegressor:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:  # corrupt or non-checkpoint file
        raise ValueError(f"unreadable landmark checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("magic") != CHECKPOINT_MAGIC:
        raise ValueError(f"{path} is not a landmark model checkpoint")
    model = LandmarkRegressor(LgConfig(**payload["config"]))
    model.load_state_dict(payload["state"])
    model.eval()
    return model
