"""Morph-attack-detection walkthrough.

Builds a small corpus where "morphs" are low-pass filtered versions of sharp
bona fide textures, extracts the three classical descriptors (LPQ, BSIF, HOG),
trains both classical detectors on each, and reports D-EER plus the
APCER/BPCER trade-off of the best combination.

Run:  python3 demos/demo_mad.py
"""

import numpy as np
from scipy.ndimage import gaussian_filter

from ocumorph.mad import (
    MadScoreSet,
    apcer_bpcer,
    bsif_features,
    d_eer,
    hog_features,
    lpq_features,
    train_detector,
)


def build_corpus(n=200, size=32):
    images, labels = [], []
    for i in range(n):
        raw = np.random.default_rng(1000 + i).uniform(0, 255, (size, size))
        if i % 2 == 0:
            images.append(raw)
            labels.append("bonafide")
        else:
            images.append(gaussian_filter(raw, 1.5))
            labels.append("morph")
    return images, labels


def main():
    images, labels = build_corpus()
    split = 140  # train on 140, evaluate on 60

    results = {}
    for name, extract in (("lpq", lpq_features), ("bsif", bsif_features),
                          ("hog", hog_features)):
        feats = np.asarray([extract(im) for im in images])
        for kind in ("linear_margin", "tree_ensemble"):
            det = train_detector(feats[:split], labels[:split], kind=kind, seed=0)
            scores = det.score(feats[split:])
            records = [(f"s{i}", lbl, float(sc))
                       for i, (lbl, sc) in enumerate(zip(labels[split:], scores))]
            results[(name, kind)] = MadScoreSet(records)

    print("descriptor   detector        D-EER")
    best = min(results, key=lambda k: d_eer(results[k]))
    for (name, kind), score_set in results.items():
        mark = "  <- best" if (name, kind) == best else ""
        print(f"{name:10s}   {kind:13s}  {d_eer(score_set):6.3f}{mark}")

    score_set = results[best]
    all_scores = sorted(r[2] for r in score_set.records)
    print(f"\nAPCER/BPCER sweep for {best[0]} + {best[1]}:")
    print("threshold   APCER   BPCER")
    for t in np.quantile(all_scores, [0.1, 0.3, 0.5, 0.7, 0.9]):
        apcer, bpcer = apcer_bpcer(score_set, float(t))
        print(f"{t:9.3f}   {apcer:5.3f}   {bpcer:5.3f}")


if __name__ == "__main__":
    main()
