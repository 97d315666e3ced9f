"""Vulnerability and quality metrics walkthrough.

Builds a toy verification-score set and sweeps MMPMR/FMMPMR across thresholds
calibrated to target false-match rates, then shows the geometry metrics: the
least-squares ellipse fit and IoU-based iris irregularity on rasterized masks,
and gaze consistency for morph iris centers in several positions.

Run:  python3 demos/demo_metrics.py
"""

import numpy as np

from ocumorph.metrics import (
    Ellipse,
    MorphScores,
    VerificationScoreSet,
    fit_ellipse_lsq,
    fmmpmr,
    gaze_consistency,
    iris_irregularity,
    mmpmr,
    rasterize_ellipse,
    threshold_at_fmr,
)


def main():
    rng = np.random.default_rng(0)
    # 50 morphs, each probed 3 times per contributing subject; scores near the
    # impostor/genuine boundary so the threshold actually matters
    morphs = [MorphScores(f"m{i}",
                          list(rng.uniform(0.3, 0.9, 3)),
                          list(rng.uniform(0.3, 0.9, 3)))
              for i in range(50)]
    scores = VerificationScoreSet(morphs=morphs)
    impostors = rng.uniform(0.0, 0.6, 5000)

    print("target FMR   threshold    MMPMR   FMMPMR")
    for fmr in (0.01, 0.001, 0.0001):
        t = threshold_at_fmr(impostors, fmr)
        print(f"{fmr:10.4%}   {t:9.4f}   {mmpmr(scores, t):6.3f}   "
              f"{fmmpmr(scores, t):6.3f}")

    # geometry: recover an ellipse from noisy boundary samples
    truth = Ellipse(40.0, 30.0, 12.0, 7.0, 0.3)
    th = np.linspace(0, 2 * np.pi, 80, endpoint=False)
    x = truth.cx + truth.a * np.cos(th) * np.cos(truth.theta) \
        - truth.b * np.sin(th) * np.sin(truth.theta)
    y = truth.cy + truth.a * np.cos(th) * np.sin(truth.theta) \
        + truth.b * np.sin(th) * np.cos(truth.theta)
    pts = np.column_stack([x, y]) + rng.normal(0, 0.05, (80, 2))
    fit = fit_ellipse_lsq(pts)
    print(f"\nellipse fit on noisy boundary: center ({fit.cx:.2f}, {fit.cy:.2f}) "
          f"axes ({fit.a:.2f}, {fit.b:.2f}) angle {fit.theta:.3f}")

    clean = rasterize_ellipse(truth, 64, 80)
    square = np.zeros((64, 80), dtype=bool)
    square[20:40, 30:50] = True
    print(f"iris irregularity: true ellipse mask {iris_irregularity(clean):.4f}, "
          f"square mask {iris_irregularity(square):.4f}")

    c1, c2 = np.array([0.0, 0.0]), np.array([10.0, 0.0])
    print("\ngaze consistency (contributing centers at (0,0) and (10,0)):")
    for label, c_m in (("midpoint", np.array([5.0, 0.0])),
                       ("on subject 1", c1),
                       ("5 px above midpoint", np.array([5.0, 5.0])),
                       ("far away", np.array([5.0, 40.0]))):
        print(f"  {label:22s} {gaze_consistency(c_m, c1, c2):.4f}")


if __name__ == "__main__":
    main()
