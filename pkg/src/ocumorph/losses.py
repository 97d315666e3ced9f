"""Training losses: multi-scale Wasserstein adversarial terms, gradient penalty,
MS-SSIM, perceptual, reconstruction, identity, and identity-difference, plus the
weighted total and small bundled fallback backbones for the identity/perceptual
plug-in interfaces."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

# standard published multi-scale SSIM scale weights
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


@dataclass
class LossVector:
    adv: torch.Tensor
    ms_ssim: torch.Tensor
    perceptual: torch.Tensor
    reconstruction: torch.Tensor
    identity: torch.Tensor
    identity_diff: torch.Tensor

    FIELDS = ("adv", "ms_ssim", "perceptual", "reconstruction", "identity", "identity_diff")

    def as_list(self):
        return [getattr(self, f) for f in self.FIELDS]

    def values(self):
        return [float(v.detach() if torch.is_tensor(v) else v) for v in self.as_list()]


def _mean_scores(score_maps):
    """Unweighted mean over the critic's scales of each map's mean."""
    return torch.stack([m.mean() for m in score_maps]).mean()


def adv_loss_discriminator(disc, reals, fakes, heatmaps) -> torch.Tensor:
    """Critic loss: E[D(fake)] - E[D(real)], averaged over the four scales."""
    real_scores = disc(reals, heatmaps)
    fake_scores = disc(fakes, heatmaps)
    return _mean_scores(fake_scores) - _mean_scores(real_scores)


def adv_loss_generator(disc, fakes, heatmaps) -> torch.Tensor:
    """Generator adversarial loss: -E[D(fake)] over scales."""
    return -_mean_scores(disc(fakes, heatmaps))


def critic_scalar(score_maps_or_scalar):
    """Reduce a critic output (score-map list or per-sample tensor) to per-sample
    scalars by summing the mean score of every scale."""
    if torch.is_tensor(score_maps_or_scalar):
        t = score_maps_or_scalar
        return t.flatten(1).mean(dim=1) if t.dim() > 1 else t
    return torch.stack(
        [m.flatten(1).mean(dim=1) for m in score_maps_or_scalar], dim=0
    ).sum(dim=0)


def gradient_penalty(critic, reals, fakes, heatmaps=None, generator=None) -> torch.Tensor:
    """WGAN-GP term E[(||grad_x D(x_hat)||_2 - 1)^2] at x_hat = u*real + (1-u)*fake,
    u ~ Uniform(0,1) per sample; gradients flow through all critic scales summed.

    `critic` is called as critic(x, heatmaps) when heatmaps are given, else
    critic(x); it may return a list of score maps or per-sample scalars.
    """
    if reals.shape != fakes.shape:
        raise ValueError("real and fake batches must share a shape")
    u = torch.rand((reals.shape[0],) + (1,) * (reals.dim() - 1),
                   generator=generator, device=reals.device, dtype=reals.dtype)
    mixed = (u * reals + (1.0 - u) * fakes).detach().requires_grad_(True)
    out = critic(mixed, heatmaps) if heatmaps is not None else critic(mixed)
    scores = critic_scalar(out)
    grads = torch.autograd.grad(scores.sum(), mixed, create_graph=True)[0]
    norms = grads.flatten(1).norm(2, dim=1)
    return ((norms - 1.0) ** 2).mean()


def _gaussian_window(size: int, sigma: float, device, dtype):
    coords = torch.arange(size, device=device, dtype=dtype) - (size - 1) / 2.0
    g = torch.exp(-(coords ** 2) / (2 * sigma ** 2))
    g = g / g.sum()
    return g[:, None] @ g[None, :]


def _ssim_components(x, y, window_size=11, sigma=1.5, data_range=1.0):
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    ch = x.shape[1]
    win = _gaussian_window(window_size, sigma, x.device, x.dtype).expand(ch, 1, window_size, window_size)
    mu_x = F.conv2d(x, win, groups=ch)
    mu_y = F.conv2d(y, win, groups=ch)
    mu_x2, mu_y2, mu_xy = mu_x ** 2, mu_y ** 2, mu_x * mu_y
    sx = F.conv2d(x * x, win, groups=ch) - mu_x2
    sy = F.conv2d(y * y, win, groups=ch) - mu_y2
    sxy = F.conv2d(x * y, win, groups=ch) - mu_xy
    cs = (2 * sxy + c2) / (sx + sy + c2)
    ssim_map = ((2 * mu_xy + c1) / (mu_x2 + mu_y2 + c1)) * cs
    return ssim_map.mean(), cs.mean()


def ms_ssim_min_size(scales: int, window_size: int = 11) -> int:
    return (window_size - 1) * 2 ** (scales - 1) + 1


def ms_ssim(x, y, scales: int = 5, window_size: int = 11) -> torch.Tensor:
    """Multi-scale SSIM of two batches in [-1, 1] (rescaled to [0, 1] internally)."""
    if x.shape != y.shape:
        raise ValueError("ms_ssim inputs must share a shape")
    min_side = ms_ssim_min_size(scales, window_size)
    if min(x.shape[-2:]) < min_side:
        raise ValueError(
            f"image side {min(x.shape[-2:])} below the {scales}-scale pyramid minimum of {min_side}")
    x = (x + 1.0) / 2.0
    y = (y + 1.0) / 2.0
    weights = torch.tensor(MS_SSIM_WEIGHTS[:scales], device=x.device, dtype=x.dtype)
    weights = weights / weights.sum()
    vals = []
    for s in range(scales):
        ssim_v, cs_v = _ssim_components(x, y, window_size)
        vals.append(ssim_v if s == scales - 1 else cs_v)
        if s != scales - 1:
            x = F.avg_pool2d(x, 2)
            y = F.avg_pool2d(y, 2)
    stacked = torch.stack(vals).clamp(min=1e-8)
    return torch.prod(stacked ** weights)


def ms_ssim_loss(x, y, scales: int = 5, window_size: int = 11) -> torch.Tensor:
    """1 - MS-SSIM; zero iff the images agree, symmetric, bounded by [0, 1]."""
    return 1.0 - ms_ssim(x, y, scales, window_size)


def perceptual_loss(x, y, extractor, layers=None) -> torch.Tensor:
    """Sum over feature stages of the mean squared feature difference."""
    feats_x = extractor(x)
    feats_y = extractor(y)
    if layers is None:
        layers = list(feats_x)
    total = None
    for name in layers:
        if name not in feats_x:
            raise KeyError(f"unknown feature stage {name!r}; available: {sorted(feats_x)}")
        term = torch.mean((feats_x[name] - feats_y[name]) ** 2)
        total = term if total is None else total + term
    return total


def reconstruction_loss(x, y) -> torch.Tensor:
    """Mean squared pixel difference."""
    if x.shape != y.shape:
        raise ValueError("reconstruction_loss inputs must share a shape")
    return torch.mean((x - y) ** 2)


def _cosine(a, b):
    na = a.norm(dim=-1)
    nb = b.norm(dim=-1)
    if torch.any(na == 0) or torch.any(nb == 0):
        raise ValueError("zero-norm embedding")
    return (a * b).sum(dim=-1) / (na * nb)


def identity_loss(embed, x1, x2, morph) -> torch.Tensor:
    """1 - mean of the morph's cosine similarity to each contributing subject; in [0, 2]."""
    e1, e2, em = embed(x1), embed(x2), embed(morph)
    return (1.0 - 0.5 * (_cosine(e1, em) + _cosine(e2, em))).mean()


def identity_diff_loss(embed, x1, x2, morph) -> torch.Tensor:
    """cos(f(x2), f(morph)) - cos(f(x1), f(morph)); antisymmetric under subject swap."""
    e1, e2, em = embed(x1), embed(x2), embed(morph)
    return (_cosine(e2, em) - _cosine(e1, em)).mean()


def total_loss(losses: LossVector, weights) -> torch.Tensor:
    """Weighted sum of the six component losses."""
    terms = losses.as_list()
    w = [float(x) for x in weights]
    if len(w) != len(terms):
        raise ValueError(f"expected {len(terms)} weights, got {len(w)}")
    out = None
    for wi, li in zip(w, terms):
        term = wi * li
        out = term if out is None else out + term
    return out


class TinyEmbedding(nn.Module):
    """Bundled fallback for the identity-embedding plug-in interface: a small
    frozen CNN whose outputs are L2-normalized. Not comparable to a trained
    ocular recognizer; intended for plumbing and tests only."""

    def __init__(self, dim: int = 32, seed: int = 0):
        super().__init__()
        g = torch.Generator().manual_seed(seed)
        self.conv = nn.Sequential(
            nn.Conv2d(3, 8, 3, 2, 1), nn.LeakyReLU(0.2),
            nn.Conv2d(8, 16, 3, 2, 1), nn.LeakyReLU(0.2),
            nn.AdaptiveAvgPool2d(2),
        )
        self.fc = nn.Linear(64, dim)
        with torch.no_grad():
            for p in self.parameters():
                p.copy_(torch.randn(p.shape, generator=g) * 0.2)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x):
        e = self.fc(self.conv(x).flatten(1))
        return e / e.norm(dim=-1, keepdim=True).clamp_min(1e-12)


class TinyFeatureExtractor(nn.Module):
    """Bundled fallback for the perceptual plug-in interface: four named conv
    stages with frozen random weights."""

    STAGES = ("stage1", "stage2", "stage3", "stage4")

    def __init__(self, seed: int = 0):
        super().__init__()
        g = torch.Generator().manual_seed(seed)
        chans = [3, 8, 16, 16, 16]
        self.stages = nn.ModuleList(
            nn.Sequential(nn.Conv2d(chans[i], chans[i + 1], 3, 1, 1), nn.LeakyReLU(0.2))
            for i in range(4)
        )
        with torch.no_grad():
            for p in self.parameters():
                p.copy_(torch.randn(p.shape, generator=g) * 0.2)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x):
        feats = {}
        h = x
        for name, stage in zip(self.STAGES, self.stages):
            h = stage(h)
            feats[name] = h
            if name != self.STAGES[-1]:
                h = F.avg_pool2d(h, 2)
        return feats
