"""Joint training of the landmark encoder, image encoder, generator, and critic
with WGAN-GP and dynamic loss weighting, plus morph inference by latent
interpolation and full-state checkpointing."""

from __future__ import annotations

import csv
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np
import torch

from . import losses as L
from . import weighting
from .landmarks import render_heatmaps
from .networks import Discriminator, Generator, ImageEncoder, LandmarkEncoder, NetConfig

CHECKPOINT_VERSION = 1
CHECKPOINT_MAGIC = "ocumorph-train"
LOG_COLUMNS = (
    ["step"]
    + [f"loss_{f}" for f in L.LossVector.FIELDS]
    + [f"w_{f}" for f in L.LossVector.FIELDS]
    + ["critic_loss", "gp"]
)


@dataclass
class TrainConfig:
    batch_size: int = 64
    lr_e: float = 2e-4
    lr_g: float = 2e-4
    lr_d: float = 1e-5
    beta1: float = 0.5
    weight_decay: float = 1e-5
    lr_gamma: float = 0.9998
    gp_weight: float = 10.0
    epochs: int = 1
    seed: int = 0
    checkpoint_every: int = 10
    heatmap_sigma: float = 5.0
    ms_ssim_scales: int = 5
    net: NetConfig = field(default_factory=NetConfig)

    def __post_init__(self):
        for name in ("lr_e", "lr_g", "lr_d", "lr_gamma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.gp_weight < 0:
            raise ValueError("gp_weight must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")

    @staticmethod
    def max_ms_ssim_scales(image_size: int, window: int = 11) -> int:
        s = 1
        while L.ms_ssim_min_size(s + 1, window) <= image_size and s < 5:
            s += 1
        return s


class MorphModel:
    """The four networks plus their optimizers, schedulers, and weight state."""

    def __init__(self, config: TrainConfig):
        self.config = config
        torch.manual_seed(config.seed)
        net = config.net
        self.landmark_encoder = LandmarkEncoder(net)
        self.encoder = ImageEncoder(net)
        self.generator = Generator(net)
        self.discriminator = Discriminator(net)
        self.weight_state = weighting.WeightState.uniform(6)
        gen_params = (list(self.generator.parameters())
                      + list(self.landmark_encoder.parameters()))
        self.opt_e = torch.optim.AdamW(self.encoder.parameters(), lr=config.lr_e,
                                       betas=(config.beta1, 0.999), weight_decay=config.weight_decay)
        self.opt_g = torch.optim.AdamW(gen_params, lr=config.lr_g,
                                       betas=(config.beta1, 0.999), weight_decay=config.weight_decay)
        self.opt_d = torch.optim.AdamW(self.discriminator.parameters(), lr=config.lr_d,
                                       betas=(config.beta1, 0.999), weight_decay=config.weight_decay)
        self.scheds = [torch.optim.lr_scheduler.ExponentialLR(o, gamma=config.lr_gamma)
                       for o in (self.opt_e, self.opt_g, self.opt_d)]
        self.rng = torch.Generator().manual_seed(config.seed)
        self.step = 0
        self.epoch = 0

    def networks(self):
        return (self.landmark_encoder, self.encoder, self.generator, self.discriminator)

    def train_mode(self, flag=True):
        for n in self.networks():
            n.train(flag)

    def heatmaps_for(self, points_batch: np.ndarray) -> torch.Tensor:
        """Render the 19 core-point heatmap channels for a batch of point arrays."""
        net = self.config.net
        maps = np.stack([
            render_heatmaps(p, net.image_size, net.image_size, self.config.heatmap_sigma)
            for p in points_batch
        ])
        return torch.from_numpy(maps.astype(np.float32))


def _to_tensor(images: np.ndarray) -> torch.Tensor:
    arr = np.asarray(images, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[None]
    return torch.from_numpy(np.transpose(arr, (0, 3, 1, 2)))


def _to_image(tensor: torch.Tensor) -> np.ndarray:
    return np.transpose(tensor.detach().numpy(), (0, 2, 3, 1)).astype(np.float64)


def default_pairs(n: int):
    """Fallback pairing when none is given: (0,1), (2,3), ... plus a wrap pair
    for odd counts; alpha fixed at 0.5."""
    if n < 2:
        raise ValueError("pair training needs at least 2 images")
    pairs = [(i, i + 1, 0.5) for i in range(0, n - 1, 2)]
    if n % 2 == 1:
        pairs.append((n - 1, 0, 0.5))
    return pairs


def train(
    config: TrainConfig,
    images: np.ndarray,
    landmark_points: np.ndarray,
    out_dir,
    pairs=None,
    embedding=None,
    perceptual=None,
    max_steps: int | None = None,
    model: MorphModel | None = None,
    log_name: str = "train_log.csv",
) -> MorphModel:
    """Run the joint training loop over morph pairs.

    `images` is (N, H, W, 3) in [-1, 1]; `landmark_points` is (N, 33, 2) pixel
    coordinates; `pairs` is a list of (index_1, index_2, alpha) triples. Each
    batch performs one critic update (real/fake scores plus the weighted
    gradient penalty; fakes treated as constants), one
    generator/encoder/landmark-encoder update with the dynamically weighted
    total, and one weight-adjuster update. Fakes are generated from
    alpha-interpolated latents and conditioned on the alpha-interpolated
    landmark heatmaps; reconstruction-style losses compare the morph against
    each contributing image and average. Schedulers step per epoch; checkpoints
    and the CSV log flush every `checkpoint_every` epochs and at the end. A NaN
    loss aborts with the log flushed and the last checkpoint retained.
    """
    os.makedirs(out_dir, exist_ok=True)
    images = np.asarray(images, dtype=np.float32)
    pts = np.asarray(landmark_points, dtype=np.float64)
    if len(images) == 0:
        raise ValueError("empty training set")
    if len(images) != len(pts):
        raise ValueError("images and landmarks differ in length")
    if pairs is None:
        pairs = default_pairs(len(images))
    pairs = [(int(a), int(b), float(al)) for a, b, al in pairs]
    if not pairs:
        raise ValueError("no training pairs")

    if model is None:
        model = MorphModel(config)
    embedding = embedding if embedding is not None else L.TinyEmbedding()
    perceptual = perceptual if perceptual is not None else L.TinyFeatureExtractor()
    net = config.net
    scale = float(net.image_size)
    core = pts[:, :19] if pts.shape[1] >= 19 else pts
    x_all = _to_tensor(images)
    lm_all = torch.from_numpy((pts / scale).astype(np.float32))

    log_path = os.path.join(out_dir, log_name)
    log_rows = []
    model.train_mode(True)
    order_rng = np.random.default_rng(config.seed)
    for _ in range(model.epoch):  # keep resumed runs on the original shuffle stream
        order_rng.permutation(len(pairs))
    ms_scales = min(config.ms_ssim_scales, TrainConfig.max_ms_ssim_scales(net.image_size))
    stop = False

    for epoch in range(model.epoch, config.epochs):
        order = order_rng.permutation(len(pairs))
        for start in range(0, len(pairs), config.batch_size):
            batch = [pairs[i] for i in order[start:start + config.batch_size]]
            ia = [p[0] for p in batch]
            ib = [p[1] for p in batch]
            alpha = torch.tensor([p[2] for p in batch], dtype=torch.float32)[:, None]
            x1, x2 = x_all[ia], x_all[ib]
            lm1, lm2 = lm_all[ia], lm_all[ib]
            core_mid = ((1 - alpha[:, None].numpy()) * core[ia]
                        + alpha[:, None].numpy() * core[ib])
            heat1 = model.heatmaps_for(core[ia])
            heat2 = model.heatmaps_for(core[ib])
            heat_m = model.heatmaps_for(core_mid)

            def make_fakes():
                z = interpolate_latents(model.encoder(x1, heat1),
                                        model.encoder(x2, heat2), alpha)
                f_l = interpolate_latents(model.landmark_encoder(lm1),
                                          model.landmark_encoder(lm2), alpha)
                return model.generator(z, f_l)

            # critic update; fakes treated as constants
            model.opt_d.zero_grad()
            with torch.no_grad():
                fakes = make_fakes()
            reals = torch.cat([x1, x2])
            heat_reals = torch.cat([heat1, heat2])
            fakes2 = torch.cat([fakes, fakes])
            heat_fakes = torch.cat([heat_m, heat_m])
            err_d_real = -L.critic_scalar(model.discriminator(reals, heat_reals)).mean()
            err_d_fake = L.critic_scalar(model.discriminator(fakes2, heat_fakes)).mean()
            gp = L.gradient_penalty(model.discriminator, reals, fakes2, heat_fakes,
                                    generator=model.rng)
            err_d = err_d_real + err_d_fake + config.gp_weight * gp
            err_d.backward()
            model.opt_d.step()

            # generator / encoder / landmark-encoder update
            model.opt_g.zero_grad()
            model.opt_e.zero_grad()
            fakes = make_fakes()
            loss_vec = L.LossVector(
                adv=L.adv_loss_generator(model.discriminator, fakes, heat_m),
                ms_ssim=0.5 * (L.ms_ssim_loss(fakes, x1, scales=ms_scales)
                               + L.ms_ssim_loss(fakes, x2, scales=ms_scales)),
                perceptual=0.5 * (L.perceptual_loss(fakes, x1, perceptual)
                                  + L.perceptual_loss(fakes, x2, perceptual)),
                reconstruction=0.5 * (L.reconstruction_loss(fakes, x1)
                                      + L.reconstruction_loss(fakes, x2)),
                identity=L.identity_loss(embedding, x1, x2, fakes),
                identity_diff=L.identity_diff_loss(embedding, x1, x2, fakes),
            )
            raw = loss_vec.values()
            if any(np.isnan(v) for v in raw) or np.isnan(float(err_d.detach())):
                _write_log(log_path, log_rows)
                raise RuntimeError(
                    f"NaN loss at step {model.step}; aborting (last checkpoint retained)")
            model.weight_state = weighting.update(model.weight_state, raw)
            err_g = L.total_loss(loss_vec, model.weight_state.weights)
            err_g.backward()
            model.opt_g.step()
            model.opt_e.step()

            model.step += 1
            log_rows.append([model.step] + raw + list(model.weight_state.weights)
                            + [float(err_d.detach()), float(gp.detach())])
            if max_steps is not None and model.step >= max_steps:
                stop = True
                break
        for sched in model.scheds:
            sched.step()
        model.epoch = epoch + 1
        if model.epoch % config.checkpoint_every == 0 or stop or model.epoch == config.epochs:
            save_checkpoint(os.path.join(out_dir, "checkpoint.pt"), model)
            _write_log(log_path, log_rows)
        if stop:
            break
    save_checkpoint(os.path.join(out_dir, "checkpoint.pt"), model)
    _write_log(log_path, log_rows)
    return model


def _write_log(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_COLUMNS)
        writer.writerows(rows)


def read_log(path) -> list:
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return [{k: float(v) for k, v in row.items()} for row in reader]


def make_morph(model: MorphModel, image_1, image_2, landmarks_1, landmarks_2,
               alpha: float = 0.5) -> np.ndarray:
    """Morph by linear latent interpolation: z and the landmark feature are each
    blended at `alpha`, and the generator is conditioned on the blend."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    cfg = model.config
    net = cfg.net
    scale = float(net.image_size)
    model.train_mode(False)
    with torch.no_grad():
        outs = []
        for img, lms in ((image_1, landmarks_1), (image_2, landmarks_2)):
            pts = lms.points if hasattr(lms, "points") else np.asarray(lms, dtype=np.float64)
            x = _to_tensor(np.asarray(img.pixels if hasattr(img, "pixels") else img))
            heat = model.heatmaps_for(pts[None, :19])
            z = model.encoder(x, heat)
            f_l = model.landmark_encoder(
                torch.from_numpy((pts / scale).astype(np.float32))[None])
            outs.append((z, f_l))
        (z1, f1), (z2, f2) = outs
        z_m = (1.0 - alpha) * z1 + alpha * z2
        f_m = (1.0 - alpha) * f1 + alpha * f2
        morph = model.generator(z_m, f_m)
    return _to_image(morph)[0]


def interpolate_latents(z1: torch.Tensor, z2: torch.Tensor, alpha: float) -> torch.Tensor:
    return (1.0 - alpha) * z1 + alpha * z2


def save_checkpoint(path, model: MorphModel) -> None:
    """Atomic write (temp file + rename) of the full training state."""
    payload = {
        "magic": CHECKPOINT_MAGIC,
        "version": CHECKPOINT_VERSION,
        "config": _config_dict(model.config),
        "landmark_encoder": model.landmark_encoder.state_dict(),
        "encoder": model.encoder.state_dict(),
        "generator": model.generator.state_dict(),
        "discriminator": model.discriminator.state_dict(),
        "opt_e": model.opt_e.state_dict(),
        "opt_g": model.opt_g.state_dict(),
        "opt_d": model.opt_d.state_dict(),
        "scheds": [s.state_dict() for s in model.scheds],
        "weights": model.weight_state.weights,
        "weight_rate": model.weight_state.rate,
        "weight_epsilon": model.weight_state.epsilon,
        "rng": model.rng.get_state(),
        "torch_rng": torch.get_rng_state(),
        "step": model.step,
        "epoch": model.epoch,
    }
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            torch.save(payload, fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _config_dict(config: TrainConfig) -> dict:
    d = dict(config.__dict__)
    net = dict(d.pop("net").__dict__)
    net.pop("n_stages", None)
    d["net"] = net
    return d


def config_from_dict(d: dict) -> TrainConfig:
    d = dict(d)
    net = NetConfig(**d.pop("net"))
    return TrainConfig(net=net, **d)


def load_checkpoint(path, config: TrainConfig | None = None) -> MorphModel:
    """Restore a full training state; refuses version or config mismatches."""
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise ValueError(f"unreadable checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("magic") != CHECKPOINT_MAGIC:
        raise ValueError(f"{path} is not a training checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(
            f"checkpoint version {payload.get('version')} unsupported "
            f"(expected {CHECKPOINT_VERSION})")
    saved = config_from_dict(payload["config"])
    if config is not None and _config_dict(config) != _config_dict(saved):
        raise ValueError("checkpoint config does not match the requested config")
    model = MorphModel(saved)
    model.landmark_encoder.load_state_dict(payload["landmark_encoder"])
    model.encoder.load_state_dict(payload["encoder"])
    model.generator.load_state_dict(payload["generator"])
    model.discriminator.load_state_dict(payload["discriminator"])
    model.opt_e.load_state_dict(payload["opt_e"])
    model.opt_g.load_state_dict(payload["opt_g"])
    model.opt_d.load_state_dict(payload["opt_d"])
    for sched, state in zip(model.scheds, payload["scheds"]):
        sched.load_state_dict(state)
    model.weight_state = weighting.WeightState(
        payload["weights"], payload["weight_rate"], payload["weight_epsilon"])
    model.rng.set_state(payload["rng"])
    torch.set_rng_state(payload["torch_rng"])
    model.step = payload["step"]
    model.epoch = payload["epoch"]
    return model
