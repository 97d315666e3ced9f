"""Landmark-based baseline morphing: Delaunay triangulation, per-triangle affine
warping, cross-dissolve blending, and Poisson seamless cloning."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse
import scipy.sparse.linalg
from scipy.ndimage import binary_dilation
from scipy.spatial import Delaunay, QhullError

DEDUPE_TOL = 0.5
COLLINEAR_JITTER = 1e-3


@dataclass
class TriangleMesh:
    vertices: np.ndarray   # (n, 2)
    triangles: np.ndarray  # (m, 3) int indices
    _delaunay: Delaunay | None = None


def frame_anchor_points(height: int, width: int) -> np.ndarray:
    """4 corners + 4 edge midpoints so the mesh covers the whole frame."""
    h, w = float(height - 1), float(width - 1)
    return np.array([
        [0, 0], [w, 0], [0, h], [w, h],
        [w / 2, 0], [w / 2, h], [0, h / 2], [w, h / 2],
    ], dtype=np.float64)


def _dedupe(points: np.ndarray):
    """Drop points closer than DEDUPE_TOL to an earlier point; keep first wins."""
    kept = []
    keep_idx = []
    for i, p in enumerate(points):
        if any(np.hypot(*(p - q)) < DEDUPE_TOL for q in kept):
            continue
        kept.append(p)
        keep_idx.append(i)
    return np.asarray(kept, dtype=np.float64), keep_idx


def _triangle_area(a, b, c) -> float:
    return 0.5 * abs((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))


def triangulate(points, frame=None) -> TriangleMesh:
    """Delaunay-triangulate `points` (plus frame corner/midpoint anchors when a
    (H, W) frame is given). Near-duplicate points are deduplicated with a
    warning; fully collinear inputs get a tiny jitter before one retry."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if frame is not None:
        pts = np.vstack([pts, frame_anchor_points(*frame)])
    deduped, _ = _dedupe(pts)
    if len(deduped) != len(pts):
        warnings.warn(f"triangulate: removed {len(pts) - len(deduped)} duplicate point(s)")
    if len(deduped) < 3:
        raise ValueError("triangulation needs at least 3 distinct points")
    try:
        tri = Delaunay(deduped)
    except QhullError:
        rng = np.random.default_rng(0)
        jittered = deduped + rng.uniform(-COLLINEAR_JITTER, COLLINEAR_JITTER, deduped.shape)
        try:
            tri = Delaunay(jittered)
        except QhullError as exc:
            raise ValueError("triangulation failed: points are degenerate") from exc
        warnings.warn("triangulate: collinear input perturbed by 1e-3 px")
        deduped = jittered
    simplices = []
    for s in tri.simplices:
        if _triangle_area(*deduped[s]) > 0.0:
            simplices.append(s)
    return TriangleMesh(vertices=deduped, triangles=np.asarray(simplices, dtype=int), _delaunay=tri)


def affine_from_triangles(src_tri, dst_tri) -> np.ndarray:
    """2x3 affine M mapping dst vertices to src vertices: src = M @ [x, y, 1]."""
    src = np.asarray(src_tri, dtype=np.float64)
    dst = np.asarray(dst_tri, dtype=np.float64)
    A = np.hstack([dst, np.ones((3, 1))])
    try:
        coeff = np.linalg.solve(A, src)  # (3, 2)
    except np.linalg.LinAlgError as exc:
        raise ValueError("degenerate triangle in affine solve") from exc
    return coeff.T  # (2, 3)


def _snap(coords: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    """Snap near-integer sample coordinates so identity warps stay bit-exact."""
    rounded = np.rint(coords)
    return np.where(np.abs(coords - rounded) < tol, rounded, coords)


def bilinear_sample(image: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample image at float coordinates with bilinear weights, clamped at borders."""
    h, w = image.shape[:2]
    xs = _snap(np.asarray(xs, dtype=np.float64))
    ys = _snap(np.asarray(ys, dtype=np.float64))
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(int)
    y0 = np.floor(ys).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xs - x0)[..., None]
    fy = (ys - y0)[..., None]
    p00 = image[y0, x0]
    p01 = image[y0, x1]
    p10 = image[y1, x0]
    p11 = image[y1, x1]
    top = p00 * (1 - fx) + p01 * fx
    bot = p10 * (1 - fx) + p11 * fx
    return top * (1 - fy) + bot * fy


def warp_triangle(src_image: np.ndarray, src_tri, dst_tri):
    """Warp the src triangle region into the dst triangle.

    Returns (patch, mask, (x0, y0)): patch covers the dst-triangle bounding box,
    mask marks pixels inside the triangle, (x0, y0) is the box origin.
    """
    dst = np.asarray(dst_tri, dtype=np.float64)
    if _triangle_area(*np.asarray(src_tri, dtype=np.float64)) == 0.0:
        raise ValueError("degenerate source triangle")
    if _triangle_area(*dst) == 0.0:
        warnings.warn("warp_triangle: degenerate destination triangle skipped")
        return None
    M = affine_from_triangles(src_tri, dst_tri)
    x0 = int(np.floor(dst[:, 0].min()))
    y0 = int(np.floor(dst[:, 1].min()))
    x1 = int(np.ceil(dst[:, 0].max()))
    y1 = int(np.ceil(dst[:, 1].max()))
    gx, gy = np.meshgrid(np.arange(x0, x1 + 1, dtype=np.float64),
                         np.arange(y0, y1 + 1, dtype=np.float64))
    # barycentric inside test against dst triangle
    T = np.column_stack([dst[0] - dst[2], dst[1] - dst[2]])
    inv = np.linalg.inv(T)
    rel = np.stack([gx - dst[2, 0], gy - dst[2, 1]], axis=-1)
    bary = rel @ inv.T
    l0, l1 = bary[..., 0], bary[..., 1]
    l2 = 1.0 - l0 - l1
    eps = 1e-9
    mask = (l0 >= -eps) & (l1 >= -eps) & (l2 >= -eps)
    sx = M[0, 0] * gx + M[0, 1] * gy + M[0, 2]
    sy = M[1, 0] * gx + M[1, 1] * gy + M[1, 2]
    patch = bilinear_sample(src_image, sx, sy)
    return patch, mask, (x0, y0)


def warp_image(src_image: np.ndarray, src_points: np.ndarray, mesh: TriangleMesh) -> np.ndarray:
    """Full-frame inverse warp: for each output pixel, locate its mesh triangle
    (vertices at `mesh.vertices`) and sample `src_image` through the per-triangle
    affine onto `src_points` (same vertex order as the mesh)."""
    h, w = src_image.shape[:2]
    src_points = np.asarray(src_points, dtype=np.float64)
    gx, gy = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    flat = np.stack([gx.ravel(), gy.ravel()], axis=1)
    tri = mesh._delaunay
    simplex = tri.find_simplex(flat, tol=1e-9)
    sx = gx.ravel().copy()
    sy = gy.ravel().copy()
    inside = simplex >= 0
    # barycentric coordinates via the Delaunay transform, then remap vertices
    trans = tri.transform[simplex[inside]]
    rel = flat[inside] - trans[:, 2]
    b2 = np.einsum("nij,nj->ni", trans[:, :2], rel)
    bary = np.column_stack([b2, 1.0 - b2.sum(axis=1)])
    verts = tri.simplices[simplex[inside]]
    src_xy = np.einsum("ni,nij->nj", bary, src_points[verts])
    sx[inside] = src_xy[:, 0]
    sy[inside] = src_xy[:, 1]
    warped = bilinear_sample(src_image, sx.reshape(h, w), sy.reshape(h, w))
    return warped


def periocular_mask(core_points: np.ndarray, height: int, width: int, dilate: int = 10) -> np.ndarray:
    """Convex hull of the core landmarks dilated by `dilate` px, eroded off the
    frame border so Poisson boundary conditions stay inside the frame."""
    pts = np.asarray(core_points, dtype=np.float64)
    try:
        hull = Delaunay(pts)
    except QhullError:
        return np.zeros((height, width), dtype=bool)
    gx, gy = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
    flat = np.stack([gx.ravel(), gy.ravel()], axis=1)
    mask = (hull.find_simplex(flat) >= 0).reshape(height, width)
    if dilate > 0:
        mask = binary_dilation(mask, iterations=dilate)
    border = np.zeros_like(mask)
    border[1:-1, 1:-1] = True
    return mask & border


def seamless_clone(patch: np.ndarray, target: np.ndarray, mask: np.ndarray,
                   tol: float = 1e-7, max_iter: int = 10000) -> np.ndarray:
    """Poisson blending: solve the discrete Poisson equation inside `mask` with
    `patch` gradients as guidance and `target` values as Dirichlet boundary.
    Empty mask returns the target unchanged."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != patch.shape[:2] or mask.shape != target.shape[:2]:
        raise ValueError("mask/patch/target shapes disagree")
    if not mask.any():
        return target.copy()
    if mask[0, :].any() or mask[-1, :].any() or mask[:, 0].any() or mask[:, -1].any():
        raise ValueError("seamless_clone mask must lie strictly inside the frame")
    h, w = mask.shape
    idx = -np.ones((h, w), dtype=int)
    ys, xs = np.nonzero(mask)
    n = len(ys)
    idx[ys, xs] = np.arange(n)

    patch3 = patch if patch.ndim == 3 else patch[..., None]
    target3 = target if target.ndim == 3 else target[..., None]
    out = target3.astype(np.float64).copy()

    rows, cols, vals = [], [], []
    neighbor_offsets = ((-1, 0), (1, 0), (0, -1), (0, 1))
    b_base = np.zeros((n, patch3.shape[2]))
    for k in range(n):
        y, x = ys[k], xs[k]
        rows.append(k); cols.append(k); vals.append(4.0)
        for dy, dx in neighbor_offsets:
            ny, nx = y + dy, x + dx
            # guidance: Laplacian of the patch
            b_base[k] += patch3[y, x].astype(np.float64) - patch3[ny, nx].astype(np.float64)
            if idx[ny, nx] >= 0:
                rows.append(k); cols.append(idx[ny, nx]); vals.append(-1.0)
            else:
                b_base[k] += target3[ny, nx].astype(np.float64)
    A = scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))

    for c in range(patch3.shape[2]):
        b = b_base[:, c]
        x0 = target3[ys, xs, c].astype(np.float64)
        sol, info = scipy.sparse.linalg.cg(A, b, x0=x0, rtol=0.0,
                                           atol=tol * max(1.0, np.linalg.norm(b)),
                                           maxiter=max_iter)
        if info != 0:
            sol = scipy.sparse.linalg.spsolve(A.tocsc(), b)
        out[ys, xs, c] = sol
    return out if patch.ndim == 3 else out[..., 0]


def morph(image_s: np.ndarray, image_t: np.ndarray, landmarks_s, landmarks_t,
          alpha: float = 0.5, use_seamless_clone: bool = False) -> np.ndarray:
    """Blend two eye images at `alpha`: warp both onto the alpha-interpolated
    landmark geometry, cross-dissolve, optionally Poisson-clone the periocular
    region for seamless transitions.

    The mesh is built once on the interpolated landmarks (plus frame anchors)
    and reused for both warps, which makes morph(s, t, a) and morph(t, s, 1-a)
    pixel-identical.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    img_s = np.asarray(image_s, dtype=np.float64)
    img_t = np.asarray(image_t, dtype=np.float64)
    if img_s.shape != img_t.shape:
        raise ValueError("images must share a shape")
    pts_s = landmarks_s.core_points() if hasattr(landmarks_s, "core_points") else np.asarray(landmarks_s, np.float64)
    pts_t = landmarks_t.core_points() if hasattr(landmarks_t, "core_points") else np.asarray(landmarks_t, np.float64)
    if pts_s.shape != pts_t.shape:
        raise ValueError("landmark sets must share a shape")
    h, w = img_s.shape[:2]
    anchors = frame_anchor_points(h, w)
    mid = (1.0 - alpha) * pts_s + alpha * pts_t
    mid_all = np.vstack([mid, anchors])
    src_all = np.vstack([pts_s, anchors])
    tgt_all = np.vstack([pts_t, anchors])

    deduped, keep = _dedupe(mid_all)
    mesh = triangulate(deduped, frame=None)
    # mesh.vertices may be jittered copies of deduped; map back through `keep`
    warped_s = warp_image(img_s, src_all[keep], mesh)
    warped_t = warp_image(img_t, tgt_all[keep], mesh)
    if np.array_equal(warped_s, warped_t):  # self-morph: keep bit-exact
        blended = warped_s
    else:
        blended = (1.0 - alpha) * warped_s + alpha * warped_t

    if use_seamless_clone:
        base = (1.0 - alpha) * img_s + alpha * img_t
        mask = periocular_mask(mid, h, w)
        return seamless_clone(blended, base, mask)
    return blended
