"""Quality and vulnerability metrics: SSIM, FMR-calibrated thresholds, MMPMR,
FMMPMR, iris irregularity (ellipse-fit IoU), gaze consistency, and inference
timing."""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import binary_erosion, binary_fill_holes, label
from scipy.optimize import minimize

GAZE_FORMULA_VERSION = "segment-distance-v1"
GAZE_EPSILON = 1.0  # px, guards coincident contributing centers


@dataclass
class MorphScores:
    """Verification scores for one morph: per-subject probe score lists."""
    morph_id: str
    probes_a: list
    probes_b: list


@dataclass
class VerificationScoreSet:
    morphs: list  # of MorphScores
    impostor_scores: np.ndarray = field(default_factory=lambda: np.array([]))
    genuine_scores: np.ndarray = field(default_factory=lambda: np.array([]))


@dataclass
class Ellipse:
    cx: float
    cy: float
    a: float  # semi-major
    b: float  # semi-minor
    theta: float

    def __post_init__(self):
        if not (self.a >= self.b > 0):
            raise ValueError("ellipse semi-axes must satisfy a >= b > 0")


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    coords = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(coords ** 2) / (2 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def ssim(x: np.ndarray, y: np.ndarray, data_range: float = 1.0,
         window_size: int = 11, sigma: float = 1.5) -> float:
    """Single-scale SSIM with an 11x11 Gaussian window and the default constants.
    Multichannel inputs are averaged across channels."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("ssim inputs must share a shape")
    if x.ndim == 3:
        return float(np.mean([ssim(x[..., c], y[..., c], data_range, window_size, sigma)
                              for c in range(x.shape[2])]))
    if min(x.shape) < window_size:
        raise ValueError(f"image smaller than the {window_size}x{window_size} window")
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    win = _gaussian_window(window_size, sigma)

    def filt(img):
        from scipy.signal import convolve2d
        return convolve2d(img, win, mode="valid")

    mu_x, mu_y = filt(x), filt(y)
    sx = filt(x * x) - mu_x ** 2
    sy = filt(y * y) - mu_y ** 2
    sxy = filt(x * y) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (sx + sy + c2)
    return float(np.mean(num / den))


def threshold_at_fmr(impostor_scores, fmr: float):
    """Smallest observed score t with fraction(impostor >= t) <= fmr; if no score
    qualifies the threshold is placed just above the maximum (zero false matches)."""
    scores = np.asarray(impostor_scores, dtype=np.float64)
    if len(scores) == 0:
        raise ValueError("empty impostor score pool")
    if not 0.0 <= fmr <= 1.0:
        raise ValueError("fmr must lie in [0, 1]")
    if fmr > 0 and len(scores) < 1.0 / fmr:
        warnings.warn(f"only {len(scores)} impostor scores for FMR target {fmr}; "
                      "threshold calibration is coarse")
    n = len(scores)
    for t in np.unique(scores):  # ascending; smallest qualifying t wins
        if np.count_nonzero(scores >= t) / n <= fmr:
            return float(t)
    return float(np.nextafter(scores.max(), np.inf))


def mmpmr(score_set: VerificationScoreSet, threshold: float) -> float:
    """A morph succeeds when each contributing subject has some probe at or above
    the threshold; the rate is successes over morphs."""
    if not score_set.morphs:
        raise ValueError("empty score set")
    ok = 0
    for m in score_set.morphs:
        if not m.probes_a or not m.probes_b:
            raise ValueError(f"morph {m.morph_id} lacks probes for a subject")
        if max(m.probes_a) >= threshold and max(m.probes_b) >= threshold:
            ok += 1
    return ok / len(score_set.morphs)


def fmmpmr(score_set: VerificationScoreSet, threshold: float) -> float:
    """Stricter per-attempt variant: probe k of subject a is paired with probe k
    of subject b and every paired attempt must pass simultaneously."""
    if not score_set.morphs:
        raise ValueError("empty score set")
    ok = 0
    for m in score_set.morphs:
        if not m.probes_a or not m.probes_b:
            raise ValueError(f"morph {m.morph_id} lacks probes for a subject")
        na, nb = len(m.probes_a), len(m.probes_b)
        if na != nb:
            warnings.warn(f"morph {m.morph_id}: unequal probe counts ({na} vs {nb}); "
                          "pairing up to the shorter list")
        k = min(na, nb)
        if all(m.probes_a[i] >= threshold and m.probes_b[i] >= threshold for i in range(k)):
            ok += 1
    return ok / len(score_set.morphs)


def fit_ellipse_lsq(points) -> Ellipse:
    """Direct least-squares conic fit constrained to ellipses (stable partitioned
    formulation), returning geometric parameters."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 6:
        raise ValueError("insufficient points for an ellipse fit (need >= 6)")
    x = pts[:, 0]
    y = pts[:, 1]
    # center and scale for conditioning
    mx, my = x.mean(), y.mean()
    s = max(np.abs(x - mx).max(), np.abs(y - my).max())
    if s == 0:
        raise ValueError("degenerate point set")
    xs = (x - mx) / s
    ys = (y - my) / s

    d1 = np.column_stack([xs * xs, xs * ys, ys * ys])
    d2 = np.column_stack([xs, ys, np.ones_like(xs)])
    s1 = d1.T @ d1
    s2 = d1.T @ d2
    s3 = d2.T @ d2
    try:
        t = -np.linalg.solve(s3, s2.T)
    except np.linalg.LinAlgError as exc:
        raise ValueError("degenerate point configuration for ellipse fit") from exc
    m = s1 + s2 @ t
    m = np.array([m[2] / 2.0, -m[1], m[0] / 2.0])
    eigval, eigvec = np.linalg.eig(m)
    cond = 4.0 * eigvec[0] * eigvec[2] - eigvec[1] ** 2
    valid = np.where(cond > 0)[0]
    if len(valid) == 0:
        raise ValueError("least-squares fit did not produce an ellipse")
    a1 = np.real(eigvec[:, valid[0]])
    coeffs_scaled = np.concatenate([a1, t @ a1])

    # fit lives in the centered/scaled frame; map the geometry back afterwards
    norm_ellipse = _conic_to_ellipse(*coeffs_scaled)
    return Ellipse(
        cx=float(mx + s * norm_ellipse.cx),
        cy=float(my + s * norm_ellipse.cy),
        a=float(s * norm_ellipse.a),
        b=float(s * norm_ellipse.b),
        theta=norm_ellipse.theta,
    )


def _conic_to_ellipse(a, b, c, d, e, g) -> Ellipse:
    """Convert conic ax^2 + bxy + cy^2 + dx + ey + g = 0 to geometric parameters
    via the eigendecomposition of the quadratic-form matrix."""
    if a + c < 0:  # the fitted conic's global sign is arbitrary
        a, b, c, d, e, g = -a, -b, -c, -d, -e, -g
    m = np.array([[a, b / 2.0], [b / 2.0, c]])
    if np.linalg.det(m) <= 0:
        raise ValueError("conic is not an ellipse")
    lin = np.array([d, e])
    center = -0.5 * np.linalg.solve(m, lin)
    level = -(g + 0.5 * lin @ center)  # u^T M u = level on the boundary
    eigval, eigvec = np.linalg.eigh(m)
    if level / eigval.max() <= 0:
        raise ValueError("degenerate conic")
    axes = np.sqrt(level / eigval)  # eigh sorts ascending: axes[0] is the major
    major_dir = eigvec[:, 0]
    theta = float(np.arctan2(major_dir[1], major_dir[0]))
    theta = ((theta + np.pi / 2) % np.pi) - np.pi / 2  # fold to (-pi/2, pi/2]
    semi_major = float(max(axes))  # guard fp ties (circles) against the ordering check
    semi_minor = float(min(axes))
    return Ellipse(float(center[0]), float(center[1]), semi_major, semi_minor, theta)


def rasterize_ellipse(ellipse: Ellipse, height: int, width: int) -> np.ndarray:
    """Boolean mask of the filled ellipse on the pixel grid."""
    ys, xs = np.mgrid[0:height, 0:width]
    dx = xs - ellipse.cx
    dy = ys - ellipse.cy
    ct, st = np.cos(ellipse.theta), np.sin(ellipse.theta)
    u = dx * ct + dy * st
    v = -dx * st + dy * ct
    return (u / ellipse.a) ** 2 + (v / ellipse.b) ** 2 <= 1.0


def boundary_pixels(mask: np.ndarray) -> np.ndarray:
    """(x, y) coordinates of the mask's boundary layer (mask minus its erosion)."""
    mask = np.asarray(mask, dtype=bool)
    inner = binary_erosion(mask, border_value=0)
    ys, xs = np.nonzero(mask & ~inner)
    return np.column_stack([xs, ys]).astype(np.float64)


def _raster_iou(params, region: np.ndarray) -> float:
    cx, cy, a, b, theta = params
    if a < b:  # keep the semi-major convention while the optimizer explores
        a, b = b, a
        theta += np.pi / 2.0
    if b <= 0:
        return 0.0
    fit_mask = rasterize_ellipse(Ellipse(cx, cy, a, b, theta), *region.shape)
    union = np.count_nonzero(region | fit_mask)
    if union == 0:
        return 0.0
    return np.count_nonzero(region & fit_mask) / union


def iris_irregularity(boundary_mask: np.ndarray) -> float:
    """IoU between the filled segmented region and the best-overlapping ellipse;
    1.0 means a perfectly elliptical iris.

    The ellipse starts at the least-squares boundary fit (semi-axes grown 0.5 px
    because boundary pixel centers sit inside the continuous edge) and is then
    refined by maximizing the rasterized IoU directly, which makes the score
    robust to the half-pixel ties a parameter-space fit cannot resolve.
    """
    mask = np.asarray(boundary_mask, dtype=bool)
    if not mask.any():
        raise ValueError("empty iris mask")
    labeled, ncomp = label(mask)
    if ncomp > 1:
        warnings.warn(f"iris mask has {ncomp} components; using the largest")
        sizes = [(labeled == i).sum() for i in range(1, ncomp + 1)]
        mask = labeled == (int(np.argmax(sizes)) + 1)
    filled = binary_fill_holes(mask)
    pts = boundary_pixels(filled)
    if len(pts) < 6:
        raise ValueError("iris boundary too small to fit an ellipse")
    ellipse = fit_ellipse_lsq(pts)
    x = np.array([ellipse.cx, ellipse.cy, ellipse.a + 0.5, ellipse.b + 0.5, ellipse.theta])
    best = _raster_iou(x, filled)
    # fixed absolute simplex offsets keep the refinement exactly equivariant
    # under integer translations of the mask; the second pass restarts from the
    # first optimum to escape plateaus of the piecewise-constant objective
    for _ in range(2):
        simplex = np.vstack([x, x + np.diag([0.5, 0.5, 0.5, 0.5, 0.05])])
        res = minimize(lambda p: -_raster_iou(p, filled), x, method="Nelder-Mead",
                       options={"maxfev": 400, "xatol": 1e-3, "fatol": 1e-4,
                                "initial_simplex": simplex})
        if float(-res.fun) > best:
            best = float(-res.fun)
            x = res.x
    return best


def _point_segment_distance(p, a, b) -> float:
    p, a, b = (np.asarray(v, dtype=np.float64) for v in (p, a, b))
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.linalg.norm(p - a))
    t = np.clip((p - a) @ ab / denom, 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))


def gaze_consistency(landmarks_morph, landmarks_1, landmarks_2) -> float:
    """Geometric gaze plausibility (formula version segment-distance-v1): distance
    of the morph's iris center to the segment between the contributing subjects'
    centers, normalized by half their separation; clipped to [0, 1]."""
    c_m = _iris_center(landmarks_morph)
    c_1 = _iris_center(landmarks_1)
    c_2 = _iris_center(landmarks_2)
    d = _point_segment_distance(c_m, c_1, c_2)
    half_span = float(np.linalg.norm(c_1 - c_2)) / 2.0
    return max(0.0, 1.0 - d / (half_span + GAZE_EPSILON))


def _iris_center(lms) -> np.ndarray:
    if hasattr(lms, "iris_center"):
        return np.asarray(lms.iris_center(), dtype=np.float64)
    arr = np.asarray(lms, dtype=np.float64)
    if arr.shape != (2,):
        raise ValueError("expected a landmark set or a 2-vector iris center")
    return arr


def time_inference(run, n_runs: int = 10, warmup: int = 3) -> float:
    """Median wall time of `run()` in milliseconds after warm-up runs."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    for _ in range(warmup):
        run()
    times = []
    for _ in range(n_runs):
        t0 = time.perf_counter()
        run()
        times.append((time.perf_counter() - t0) * 1000.0)
    return float(np.median(times))
