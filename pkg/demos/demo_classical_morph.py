"""Classical landmark-guided morphing walkthrough.

Draws two synthetic eyes with known landmarks, morphs them at several blend
factors via Delaunay triangulation + per-triangle affine warps, and optionally
finishes with Poisson seamless cloning of the periocular region. Saves the
frames next to this script and prints similarity numbers.

Run:  python3 demos/demo_classical_morph.py
"""

import os

import numpy as np

from ocumorph.classical import morph
from ocumorph.data import OcularImage, RAW, save_image
from ocumorph.metrics import ssim
from synth import draw_eye, eye_landmarks

OUT = os.path.join(os.path.dirname(__file__), "out_classical")


def main():
    os.makedirs(OUT, exist_ok=True)
    rng = np.random.default_rng(0)
    size = 128

    # two "subjects": different iris position, radius, and color
    img_a = draw_eye(size, 52.0, 66.0, 15.0, rng)
    img_b = draw_eye(size, 74.0, 60.0, 19.0, rng)
    pts_a = eye_landmarks(size, 52.0, 66.0, 15.0)
    pts_b = eye_landmarks(size, 74.0, 60.0, 19.0)
    save_image(os.path.join(OUT, "subject_a.png"), OcularImage((img_a + 1) * 127.5, RAW))
    save_image(os.path.join(OUT, "subject_b.png"), OcularImage((img_b + 1) * 127.5, RAW))

    print("alpha   ssim(morph, A)   ssim(morph, B)")
    for alpha in (0.0, 0.25, 0.5, 0.75, 1.0):
        m = morph(img_a, img_b, pts_a, pts_b, alpha)
        save_image(os.path.join(OUT, f"morph_{alpha:.2f}.png"),
                   OcularImage((m + 1) * 127.5, RAW))
        print(f"{alpha:5.2f}   {ssim(m, img_a):14.4f}   {ssim(m, img_b):14.4f}")

    # seamless cloning hides the blend seam around the periocular region
    smooth = morph(img_a, img_b, pts_a, pts_b, 0.5, use_seamless_clone=True)
    save_image(os.path.join(OUT, "morph_0.50_seamless.png"),
               OcularImage((smooth + 1) * 127.5, RAW))
    print(f"\nseamless 0.5 morph: ssim vs A = {ssim(smooth, img_a):.4f}, "
          f"vs B = {ssim(smooth, img_b):.4f}")
    print(f"frames written to {OUT}/")


if __name__ == "__main__":
    main()
