"""Command-line entry point orchestrating the pipeline stages.

Subcommands mirror the library modules:

    ocumorph landmarks train|predict ...
    ocumorph morph classical|gan ...
    ocumorph train gan|mad ...
    ocumorph eval vulnerability|quality|mad ...

Every run writes a resolved-config snapshot (JSON) next to its outputs. Exit
codes: 0 success, 1 runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import traceback

import numpy as np

from . import classical, data, landmarks, mad, metrics, training


def _snapshot(out_dir: str, command: str, args: argparse.Namespace) -> None:
    os.makedirs(out_dir, exist_ok=True)
    resolved = {k: v for k, v in vars(args).items() if k != "func"}
    resolved["command"] = command
    with open(os.path.join(out_dir, "resolved_config.json"), "w", encoding="utf-8") as fh:
        json.dump(resolved, fh, indent=2, default=str)


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)


def _load_train_config(path, image_size=None, seed=None) -> training.TrainConfig:
    """Config file format: `key = value` lines mirroring TrainConfig fields."""
    values = {}
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#")[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected `key = value`")
                key, _, val = line.partition("=")
                values[key.strip()] = val.strip()
    net_fields = set(training.NetConfig.__dataclass_fields__)
    net_kwargs, train_kwargs = {}, {}
    for key, val in values.items():
        target = net_kwargs if key in net_fields else train_kwargs
        field_map = (training.NetConfig.__dataclass_fields__ if key in net_fields
                     else training.TrainConfig.__dataclass_fields__)
        if key not in field_map:
            raise ValueError(f"unknown config key {key!r}")
        target[key] = type(field_map[key].default)(val) if field_map[key].default is not None else val
    if image_size is not None:
        net_kwargs["image_size"] = image_size
    if seed is not None:
        train_kwargs["seed"] = seed
    net = training.NetConfig(**net_kwargs)
    return training.TrainConfig(net=net, **train_kwargs)


# --- landmarks ---------------------------------------------------------------

def cmd_landmarks_train(args) -> int:
    _snapshot(args.out, "landmarks train", args)
    index = data.load_dataset(args.root, args.manifest)
    images, labels = [], []
    for rel, subject, _ in index.entries:
        img = data.preprocess(data.load_image(os.path.join(index.root, rel), subject))
        lm_path = os.path.join(args.landmark_dir,
                               os.path.splitext(os.path.basename(rel))[0] + ".json")
        images.append(img)
        labels.append(data.read_landmarks(lm_path))
    model, mse_log = landmarks.train_landmark_model(
        images, labels, epochs=args.epochs, seed=args.seed)
    landmarks.save_landmark_model(os.path.join(args.out, "landmark_model.ckpt"), model)
    _write_json(os.path.join(args.out, "train_summary.json"),
                {"epochs": args.epochs, "final_mse_px2": mse_log[-1], "mse_log": mse_log})
    return 0


def cmd_landmarks_predict(args) -> int:
    _snapshot(args.out, "landmarks predict", args)
    model = landmarks.load_landmark_model(args.model)
    names = sorted(os.listdir(args.input))
    written, warnings_count = 0, 0
    for name in names:
        path = os.path.join(args.input, name)
        if not os.path.isfile(path):
            continue
        try:
            img = data.preprocess(data.load_image(path))
        except Exception:
            warnings_count += 1
            continue
        lms = landmarks.predict_landmarks(model, img)
        out_path = os.path.join(args.out, os.path.splitext(name)[0] + ".json")
        data.write_landmarks(out_path, lms)
        written += 1
    _write_json(os.path.join(args.out, "predict_summary.json"),
                {"written": written, "warnings": warnings_count})
    return 0


# --- morph -------------------------------------------------------------------

def _read_pairs_file(path):
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"pairs file line must be `image_a<TAB>image_b`: {line!r}")
            pairs.append(tuple(parts))
    return pairs


def _landmarks_for(image_path, landmark_dir):
    base = os.path.splitext(os.path.basename(image_path))[0]
    return data.read_landmarks(os.path.join(landmark_dir, base + ".json"))


def cmd_morph_classical(args) -> int:
    _snapshot(args.out, "morph classical", args)
    pairs = _read_pairs_file(args.pairs)
    manifest_rows = []
    for i, (path_a, path_b) in enumerate(pairs):
        img_a = data.preprocess(data.load_image(path_a))
        img_b = data.preprocess(data.load_image(path_b))
        lm_a = _landmarks_for(path_a, args.landmark_dir)
        lm_b = _landmarks_for(path_b, args.landmark_dir)
        morphed = classical.morph(img_a.pixels, img_b.pixels, lm_a, lm_b,
                                  alpha=args.alpha, use_seamless_clone=args.seamless)
        name = f"morph_{i:04d}.png"
        data.save_image(os.path.join(args.out, name),
                        data.OcularImage(morphed, data.NORMALIZED))
        manifest_rows.append({"morph": name, "image_a": path_a, "image_b": path_b,
                              "alpha": args.alpha, "method": "classical"})
    _write_json(os.path.join(args.out, "morph_manifest.json"), manifest_rows)
    return 0


def cmd_morph_gan(args) -> int:
    _snapshot(args.out, "morph gan", args)
    model = training.load_checkpoint(args.checkpoint)
    pairs = _read_pairs_file(args.pairs)
    manifest_rows = []
    for i, (path_a, path_b) in enumerate(pairs):
        img_a = data.preprocess(data.load_image(path_a))
        img_b = data.preprocess(data.load_image(path_b))
        lm_a = _landmarks_for(path_a, args.landmark_dir)
        lm_b = _landmarks_for(path_b, args.landmark_dir)
        morphed = training.make_morph(model, img_a, img_b, lm_a, lm_b, alpha=args.alpha)
        name = f"morph_{i:04d}.png"
        data.save_image(os.path.join(args.out, name),
                        data.OcularImage(morphed, data.NORMALIZED))
        manifest_rows.append({"morph": name, "image_a": path_a, "image_b": path_b,
                              "alpha": args.alpha, "method": "gan"})
    _write_json(os.path.join(args.out, "morph_manifest.json"), manifest_rows)
    return 0


# --- train -------------------------------------------------------------------

def cmd_train_gan(args) -> int:
    _snapshot(args.out, "train gan", args)
    config = _load_train_config(args.config, image_size=args.image_size, seed=args.seed)
    if args.dry_run:
        _write_json(os.path.join(args.out, "dry_run.json"),
                    {"status": "ok", "config": training._config_dict(config)})
        return 0
    index = data.load_dataset(args.root, args.manifest)
    images, pts = [], []
    for rel, subject, _ in index.entries:
        img = data.preprocess(data.load_image(os.path.join(index.root, rel), subject))
        lm = data.read_landmarks(os.path.join(
            args.landmark_dir, os.path.splitext(os.path.basename(rel))[0] + ".json"))
        images.append(img.pixels)
        pts.append(lm.points)
    path_to_idx = {rel: i for i, (rel, _, _) in enumerate(index.entries)}
    raw_pairs = data.pair_subjects(index, policy=args.pair_policy, seed=args.seed,
                                   k=args.pair_k)
    pairs = [(path_to_idx[p.path_a], path_to_idx[p.path_b], p.alpha) for p in raw_pairs]
    training.train(config, np.stack(images), np.stack(pts), args.out,
                   pairs=pairs, max_steps=args.max_steps)
    return 0


def cmd_train_mad(args) -> int:
    _snapshot(args.out, "train mad", args)
    features, labels = [], []
    with open(args.features, "r", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            labels.append(row["label"])
            features.append([float(v) for k, v in row.items()
                             if k not in ("sample_id", "label")])
    detector = mad.train_detector(np.asarray(features), labels, kind=args.kind,
                                  seed=args.seed)
    import pickle
    with open(os.path.join(args.out, "detector.pkl"), "wb") as fh:
        pickle.dump(detector, fh)
    _write_json(os.path.join(args.out, "train_summary.json"),
                {"kind": args.kind, "n_samples": len(labels)})
    return 0


# --- eval --------------------------------------------------------------------

def _read_score_csv(path):
    """Score files: CSV with columns morph_id, subject, probe_id, score."""
    per_morph = {}
    with open(path, "r", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rec = per_morph.setdefault(row["morph_id"], {"a": [], "b": []})
            key = "a" if row["subject"] in ("a", "A", "subject_a") else "b"
            rec[key].append(float(row["score"]))
    return metrics.VerificationScoreSet(
        morphs=[metrics.MorphScores(mid, rec["a"], rec["b"])
                for mid, rec in sorted(per_morph.items())])


def cmd_eval_vulnerability(args) -> int:
    _snapshot(args.out, "eval vulnerability", args)
    score_set = _read_score_csv(args.scores)
    impostors = np.loadtxt(args.impostors, ndmin=1)
    report = {"metric": "vulnerability", "operating_points": []}
    for fmr in args.fmr:
        t = metrics.threshold_at_fmr(impostors, fmr)
        report["operating_points"].append({
            "fmr": fmr,
            "threshold": t,
            "mmpmr": metrics.mmpmr(score_set, t),
            "fmmpmr": metrics.fmmpmr(score_set, t),
        })
    _write_json(os.path.join(args.out, "vulnerability_report.json"), report)
    return 0


def cmd_eval_quality(args) -> int:
    _snapshot(args.out, "eval quality", args)
    with open(args.morph_manifest, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    per_morph = []
    for row in manifest:
        entry = {"morph": row["morph"]}
        lm_m = _landmarks_for(row["morph"], args.landmark_dir)
        lm_a = _landmarks_for(row["image_a"], args.landmark_dir)
        lm_b = _landmarks_for(row["image_b"], args.landmark_dir)
        entry["gaze"] = metrics.gaze_consistency(lm_m, lm_a, lm_b)
        if args.mask_dir:
            base = os.path.splitext(os.path.basename(row["morph"]))[0]
            mask_path = os.path.join(args.mask_dir, base + ".png")
            mask = np.asarray(data.load_image(mask_path).pixels[..., 0]) > 127
            entry["iris_irregularity"] = metrics.iris_irregularity(mask)
        morph_dir = os.path.dirname(os.path.abspath(args.morph_manifest))
        morph_img = data.preprocess(data.load_image(os.path.join(morph_dir, row["morph"])))
        img_a = data.preprocess(data.load_image(row["image_a"]))
        img_b = data.preprocess(data.load_image(row["image_b"]))
        entry["ssim_a"] = metrics.ssim(morph_img.pixels, img_a.pixels, data_range=2.0)
        entry["ssim_b"] = metrics.ssim(morph_img.pixels, img_b.pixels, data_range=2.0)
        per_morph.append(entry)
    report = {
        "metric": "quality",
        "gaze_formula_version": metrics.GAZE_FORMULA_VERSION,
        "per_morph": per_morph,
        "aggregates": {
            "mean_gaze": float(np.mean([e["gaze"] for e in per_morph])) if per_morph else None,
            "mean_ssim": float(np.mean([0.5 * (e["ssim_a"] + e["ssim_b"])
                                        for e in per_morph])) if per_morph else None,
        },
    }
    irs = [e["iris_irregularity"] for e in per_morph if "iris_irregularity" in e]
    if irs:
        report["aggregates"]["mean_iris_irregularity"] = float(np.mean(irs))
    _write_json(os.path.join(args.out, "quality_report.json"), report)
    return 0


def cmd_eval_mad(args) -> int:
    _snapshot(args.out, "eval mad", args)
    records = []
    with open(args.scores, "r", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            records.append((row["sample_id"], row["label"], float(row["score"])))
    score_set = mad.MadScoreSet(records)
    report = {
        "metric": "mad",
        "d_eer": mad.d_eer(score_set),
        "bpcer_at_5pct_apcer": mad.bpcer_at_apcer(score_set, 0.05),
        "threshold_table": [
            {"threshold": t, "apcer": a, "bpcer": b}
            for t, (a, b) in _threshold_table(score_set)
        ],
    }
    _write_json(os.path.join(args.out, "mad_report.json"), report)
    return 0


def _threshold_table(score_set):
    bona, morph = score_set.split()
    out = []
    for t in np.unique(np.concatenate([bona, morph])):
        out.append((float(t), mad.apcer_bpcer(score_set, float(t))))
    return out


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ocumorph",
                                     description="Ocular morph generation and evaluation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_lm = sub.add_parser("landmarks", help="landmark model training and prediction")
    lm_sub = p_lm.add_subparsers(dest="subcommand", required=True)
    p = lm_sub.add_parser("train")
    p.add_argument("--root", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--landmark-dir", required=True)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_landmarks_train)
    p = lm_sub.add_parser("predict")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_landmarks_predict)

    p_morph = sub.add_parser("morph", help="generate morphs")
    morph_sub = p_morph.add_subparsers(dest="subcommand", required=True)
    p = morph_sub.add_parser("classical")
    p.add_argument("--pairs", required=True, help="TSV file: image_a<TAB>image_b")
    p.add_argument("--landmark-dir", required=True)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--seamless", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_morph_classical)
    p = morph_sub.add_parser("gan")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--landmark-dir", required=True)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_morph_gan)

    p_train = sub.add_parser("train", help="train the morph generator or a MAD detector")
    train_sub = p_train.add_subparsers(dest="subcommand", required=True)
    p = train_sub.add_parser("gan")
    p.add_argument("--root")
    p.add_argument("--manifest")
    p.add_argument("--landmark-dir")
    p.add_argument("--config", help="key = value lines mirroring TrainConfig")
    p.add_argument("--image-size", type=int, default=None)
    p.add_argument("--pair-policy", default="all_cross", choices=["all_cross", "random_k"])
    p.add_argument("--pair-k", type=int, default=0)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--dry-run", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_gan)
    p = train_sub.add_parser("mad")
    p.add_argument("--features", required=True, help="CSV: sample_id,label,feat...")
    p.add_argument("--kind", default="linear_margin",
                   choices=["linear_margin", "tree_ensemble"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_mad)

    p_eval = sub.add_parser("eval", help="evaluation reports")
    eval_sub = p_eval.add_subparsers(dest="subcommand", required=True)
    p = eval_sub.add_parser("vulnerability")
    p.add_argument("--scores", required=True, help="CSV: morph_id,subject,probe_id,score")
    p.add_argument("--impostors", required=True, help="text file, one impostor score per line")
    p.add_argument("--fmr", type=float, nargs="+", default=[0.0001, 0.001, 0.01])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval_vulnerability)
    p = eval_sub.add_parser("quality")
    p.add_argument("--morph-manifest", required=True)
    p.add_argument("--landmark-dir", required=True)
    p.add_argument("--mask-dir", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval_quality)
    p = eval_sub.add_parser("mad")
    p.add_argument("--scores", required=True, help="CSV: sample_id,label,score")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval_mad)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except Exception:
        traceback.print_exc(file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
