"""The four trainable networks (landmark encoder, image encoder, generator,
multi-scale patch discriminator) and their shared blocks: spectral-norm
convolution, instance normalization, residual block, self-attention."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn
from torch.nn.utils.parametrizations import spectral_norm

from .landmarks import N_POINTS


@dataclass
class NetConfig:
    ndf: int = 64
    ngf: int = 64
    nz: int = 200
    nc: int = 3
    n_heatmaps: int = 19
    image_size: int = 256
    landmark_feature_dim: int = 128

    def __post_init__(self):
        stages = math.log2(self.image_size / 4)
        if stages != int(stages) or stages < 1:
            raise ValueError("image_size must be 4 * 2^k for k >= 1")
        self.n_stages = int(stages)


def sn_conv(in_ch, out_ch, kernel=4, stride=2, pad=1, use_sn=True):
    conv = nn.Conv2d(in_ch, out_ch, kernel, stride, pad)
    return spectral_norm(conv) if use_sn else conv


class SelfAttention(nn.Module):
    """Self-attention over spatial positions with a residual gate initialized to 0,
    so the block is an exact identity at initialization. Query/key run at C/8
    channels, value at C; attention weights per location sum to 1."""

    def __init__(self, channels: int):
        super().__init__()
        inner = max(channels // 8, 1)
        self.query = nn.Conv2d(channels, inner, 1)
        self.key = nn.Conv2d(channels, inner, 1)
        self.value = nn.Conv2d(channels, channels, 1)
        self.gamma = nn.Parameter(torch.zeros(1))

    def attention_weights(self, x):
        b, _, h, w = x.shape
        q = self.query(x).flatten(2).transpose(1, 2)   # (b, hw, c')
        k = self.key(x).flatten(2)                     # (b, c', hw)
        return torch.softmax(q @ k, dim=-1)            # rows sum to 1

    def forward(self, x):
        b, c, h, w = x.shape
        attn = self.attention_weights(x)
        v = self.value(x).flatten(2)                   # (b, c, hw)
        out = (v @ attn.transpose(1, 2)).view(b, c, h, w)
        return x + self.gamma * out


class ResidualBlock(nn.Module):
    """conv + IN + ReLU + conv + IN with a skip connection; convs spectrally normalized."""

    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Sequential(
            spectral_norm(nn.Conv2d(channels, channels, 3, 1, 1)),
            nn.InstanceNorm2d(channels, affine=True),
            nn.ReLU(inplace=True),
            spectral_norm(nn.Conv2d(channels, channels, 3, 1, 1)),
            nn.InstanceNorm2d(channels, affine=True),
        )

    def forward(self, x):
        return x + self.body(x)


def _encoder_channels(ndf: int, n_stages: int):
    """Channel ladder for strided downsampling; doubles with depth, capped at 16x."""
    mults = [1, 2, 4, 8, 8, 16, 16, 16][:n_stages]
    if n_stages >= 6:
        mults[-1] = 16
    return [ndf * m for m in mults]


class LandmarkEncoder(nn.Module):
    """Maps 33 (x, y) points in frame-relative units to a feature vector via
    linear layers with LeakyReLU."""

    def __init__(self, config: NetConfig):
        super().__init__()
        self.config = config
        d = config.landmark_feature_dim
        self.net = nn.Sequential(
            nn.Linear(2 * N_POINTS, 256), nn.LeakyReLU(0.2, inplace=True),
            nn.Linear(256, 256), nn.LeakyReLU(0.2, inplace=True),
            nn.Linear(256, d),
        )

    def forward(self, points):
        if points.dim() == 3:
            if points.shape[1:] != (N_POINTS, 2):
                raise ValueError(f"expected (batch, {N_POINTS}, 2) landmarks, got {tuple(points.shape)}")
            points = points.flatten(1)
        elif points.shape[-1] != 2 * N_POINTS:
            raise ValueError(f"expected {2 * N_POINTS} landmark scalars, got {points.shape[-1]}")
        return self.net(points)


class ImageEncoder(nn.Module):
    """Strided spectral-norm conv blocks (no SN on the first block) with instance
    norm + LeakyReLU, a residual block and self-attention at the image_size/8
    stage, adaptive average pooling, and a 1x1 projection to the latent size."""

    def __init__(self, config: NetConfig):
        super().__init__()
        self.config = config
        chans = _encoder_channels(config.ndf, config.n_stages)
        in_ch = config.nc + config.n_heatmaps
        attn_stage = min(2, config.n_stages - 1)  # attention where features are image_size / 8
        blocks = []
        prev = in_ch
        for i, ch in enumerate(chans):
            blocks.append(sn_conv(prev, ch, use_sn=(i > 0)))
            blocks.append(nn.InstanceNorm2d(ch, affine=True))
            blocks.append(nn.LeakyReLU(0.2, inplace=True))
            if i == attn_stage:
                blocks.append(ResidualBlock(ch))
                blocks.append(SelfAttention(ch))
            prev = ch
        self.blocks = nn.Sequential(*blocks)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.project = nn.Conv2d(chans[-1], config.nz, 1)

    def forward(self, image, heatmaps):
        cfg = self.config
        if heatmaps.shape[1] != cfg.n_heatmaps:
            raise ValueError(f"expected {cfg.n_heatmaps} heatmap channels, got {heatmaps.shape[1]}")
        if image.shape[1] != cfg.nc or image.shape[-1] != cfg.image_size:
            raise ValueError(f"expected {cfg.nc}x{cfg.image_size}^2 image, got {tuple(image.shape[1:])}")
        x = torch.cat([image, heatmaps], dim=1)
        h = self.blocks(x)
        z = self.project(self.pool(h))
        return z.flatten(1)


class Generator(nn.Module):
    """Decodes (z, landmark feature) into a [-1, 1] image: transposed-conv
    upsampling with instance norm + ReLU, residual + self-attention at the 8x8
    stage, tanh output."""

    def __init__(self, config: NetConfig):
        super().__init__()
        self.config = config
        chans = _encoder_channels(config.ngf, config.n_stages)[::-1]
        in_dim = config.nz + config.landmark_feature_dim
        self.stem = nn.Sequential(
            nn.ConvTranspose2d(in_dim, chans[0], 4, 1, 0),
            nn.InstanceNorm2d(chans[0], affine=True),
            nn.ReLU(inplace=True),
            ResidualBlock(chans[0]),
        )
        ups = []
        prev = chans[0]
        out_chans = chans[1:] + [chans[-1]]
        for i in range(config.n_stages):
            last = i == config.n_stages - 1
            ch = config.nc if last else out_chans[i]
            ups.append(nn.ConvTranspose2d(prev, ch, 4, 2, 1))
            if not last:
                ups.append(nn.InstanceNorm2d(ch, affine=True))
                ups.append(nn.ReLU(inplace=True))
                if i == 0:  # 8x8 stage
                    ups.append(ResidualBlock(ch))
                    ups.append(SelfAttention(ch))
            prev = ch
        ups.append(nn.Tanh())
        self.ups = nn.Sequential(*ups)

    def forward(self, z, f_l):
        cfg = self.config
        if z.shape[-1] != cfg.nz:
            raise ValueError(f"expected latent of size {cfg.nz}, got {z.shape[-1]}")
        if f_l.shape[-1] != cfg.landmark_feature_dim:
            raise ValueError(
                f"expected landmark feature of size {cfg.landmark_feature_dim}, got {f_l.shape[-1]}")
        h = torch.cat([z, f_l], dim=1)[:, :, None, None]
        return self.ups(self.stem(h))


class Discriminator(nn.Module):
    """Multi-scale patch critic conditioned on landmark heatmaps. Emits unbounded
    score maps at image_size/4, /8, /16, /32 (64/32/16/8 for 256-px input); the
    first block omits spectral normalization."""

    def __init__(self, config: NetConfig):
        super().__init__()
        self.config = config
        ndf = config.ndf
        in_ch = config.nc + config.n_heatmaps
        # stop before the score maps shrink below 2x2 on small inputs
        n_blocks = min(5, int(math.log2(config.image_size)) - 1)
        chans = [ndf, ndf * 2, ndf * 4, ndf * 8, ndf * 8][:n_blocks]
        self.blocks = nn.ModuleList()
        self.heads = nn.ModuleList()
        prev = in_ch
        self.score_scales = []
        size = config.image_size
        for i, ch in enumerate(chans):
            layers = [sn_conv(prev, ch, use_sn=(i > 0)),
                      nn.InstanceNorm2d(ch, affine=True),
                      nn.LeakyReLU(0.2, inplace=True)]
            if i == 2:
                layers.append(ResidualBlock(ch))
                layers.append(SelfAttention(ch))
            self.blocks.append(nn.Sequential(*layers))
            prev = ch
            size //= 2
            if i >= 1:  # score heads at the four coarsest scales
                self.heads.append(spectral_norm(nn.Conv2d(ch, 1, 1)))
                self.score_scales.append(size)

    def forward(self, image, heatmaps):
        cfg = self.config
        if heatmaps.shape[1] != cfg.n_heatmaps:
            raise ValueError(f"expected {cfg.n_heatmaps} heatmap channels, got {heatmaps.shape[1]}")
        x = torch.cat([image, heatmaps], dim=1)
        scores = []
        h = x
        head_i = 0
        for i, block in enumerate(self.blocks):
            h = block(h)
            if i >= 1:
                scores.append(self.heads[head_i](h))
                head_i += 1
        return scores


def parameter_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def refine_spectral_estimates(model: nn.Module, n_iters: int = 20) -> None:
    """Run extra power-iteration steps on every spectrally normalized weight so
    the stored singular-vector estimates converge."""
    was_training = model.training
    model.train()
    with torch.no_grad():
        for _ in range(n_iters):
            for module in model.modules():
                parametrizations = getattr(module, "parametrizations", None)
                if parametrizations and "weight" in parametrizations:
                    _ = module.weight  # property access triggers one power iteration
    model.train(was_training)


def spectral_norms(model: nn.Module) -> dict:
    """SVD oracle: largest singular value of every spectrally normalized effective
    weight, keyed by module path."""
    out = {}
    model.eval()
    with torch.no_grad():
        for name, module in model.named_modules():
            parametrizations = getattr(module, "parametrizations", None)
            if parametrizations and "weight" in parametrizations:
                w = module.weight.detach()
                mat = w.reshape(w.shape[0], -1)
                out[name] = float(torch.linalg.svdvals(mat)[0])
    return out
