"""Hierarchical VAE encoders/decoders with background-pyramid extraction.

The clean and degraded encoders share their architecture; the degraded branch
additionally applies the orthogonal gating module at every level before
downsampling. The background pyramid is the per-level residual
E^{l-1} - UP(E^l), i.e. exactly the content the encoder discards between
levels.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ContractViolation, NumericFault
from .numerics import check_feature_map, up_dup
from .orthogate import OrthoGate

LOGVAR_CLAMP = 20.0
LATENT_CHANNELS = 3


@dataclass
class EncoderTrace:
    """Per-level pre-latent features, the background pyramid, and the latent."""

    e: list[torch.Tensor]            # E^0 .. E^L
    pyramid: list[torch.Tensor]      # F^1 .. F^L
    mean: torch.Tensor
    logvar: torch.Tensor
    sample: torch.Tensor
    eps: torch.Tensor | None


def background_extract(e_prev: torch.Tensor, e_cur: torch.Tensor) -> torch.Tensor:
    """Residual between a level's input and the upsampled duplicate of its
    output; this is the level's background-dominant feature."""
    check_feature_map(e_prev)
    check_feature_map(e_cur)
    up = up_dup(e_cur)
    if up.shape != e_prev.shape:
        raise ContractViolation(
            f"incompatible shapes: e_prev {tuple(e_prev.shape)} vs UP(e_cur) {tuple(up.shape)}")
    return e_prev - up


def reparameterize(mean: torch.Tensor, logvar: torch.Tensor,
                   generator: torch.Generator | None = None,
                   stochastic: bool = True):
    if mean.shape != logvar.shape:
        raise ContractViolation(
            f"mean/logvar shape mismatch: {tuple(mean.shape)} vs {tuple(logvar.shape)}")
    if not stochastic:
        return mean, None
    eps = torch.randn(mean.shape, generator=generator, dtype=mean.dtype,
                      device=mean.device)
    return mean + torch.exp(0.5 * logvar) * eps, eps


class Encoder(nn.Module):
    def __init__(self, base_channels: int, levels: int, gated: bool,
                 generator: torch.Generator | None = None,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        self.levels = levels
        self.base_channels = base_channels
        self.gated = gated
        c = base_channels
        self.stem = nn.Conv2d(3, c, 3, padding=1, dtype=dtype)
        blocks, gates, downs = [], [], []
        for i in range(levels):
            cin = c * 2 ** i
            blocks.append(nn.Sequential(
                nn.Conv2d(cin, 2 * cin, 3, padding=1, dtype=dtype), nn.SiLU(),
                nn.Conv2d(2 * cin, 2 * cin, 3, padding=1, dtype=dtype), nn.SiLU()))
            gates.append(OrthoGate(2 * cin, generator, dtype) if gated else nn.Identity())
            downs.append(nn.Conv2d(2 * cin, 2 * cin, 3, stride=2, padding=1, dtype=dtype))
        self.blocks = nn.ModuleList(blocks)
        self.gates = nn.ModuleList(gates)
        self.downs = nn.ModuleList(downs)
        self.head = nn.Conv2d(c * 2 ** levels, 2 * LATENT_CHANNELS, 1, dtype=dtype)

    def forward(self, image: torch.Tensor, stochastic: bool = False,
                generator: torch.Generator | None = None) -> EncoderTrace:
        check_feature_map(image)
        if image.shape[2] % 2 ** self.levels or image.shape[3] % 2 ** self.levels:
            raise ContractViolation(
                f"input {image.shape[2]}x{image.shape[3]} not divisible by 2^{self.levels}")
        x = self.stem(image)
        e = [x]
        for i in range(self.levels):
            x = self.blocks[i](x)
            x = self.gates[i](x)
            x = self.downs[i](x)
            if not torch.isfinite(x).all():
                raise NumericFault(f"non-finite activations at encoder level {i + 1}")
            e.append(x)
        pyramid = [background_extract(e[l - 1], e[l]) for l in range(1, self.levels + 1)]
        head = self.head(e[-1])
        mean = head[:, :LATENT_CHANNELS]
        logvar = head[:, LATENT_CHANNELS:].clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP)
        sample, eps = reparameterize(mean, logvar, generator, stochastic)
        return EncoderTrace(e, pyramid, mean, logvar, sample, eps)


class Decoder(nn.Module):
    def __init__(self, base_channels: int, levels: int,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        self.levels = levels
        self.base_channels = base_channels
        c = base_channels
        self.lift = nn.Conv2d(LATENT_CHANNELS, c * 2 ** levels, 1, dtype=dtype)
        ups, skips = [], []
        for l in range(levels, 0, -1):
            ups.append(nn.Conv2d(c * 2 ** l, c * 2 ** (l - 1), 3, padding=1, dtype=dtype))
            # bias-free so a zero pyramid contributes nothing
            skips.append(nn.Conv2d(c * 2 ** (l - 1), c * 2 ** (l - 1), 1,
                                   bias=False, dtype=dtype))
        self.ups = nn.ModuleList(ups)
        self.skips = nn.ModuleList(skips)
        self.final = nn.Conv2d(c, 3, 3, padding=1, dtype=dtype)

    def forward(self, latent: torch.Tensor, pyramid: list[torch.Tensor]) -> torch.Tensor:
        check_feature_map(latent)
        if latent.shape[1] != LATENT_CHANNELS:
            raise ContractViolation(f"latent must have 3 channels, got {latent.shape[1]}")
        if len(pyramid) != self.levels:
            raise ContractViolation(
                f"expected {self.levels} pyramid levels, got {len(pyramid)}")
        x = self.lift(latent)
        for i, l in enumerate(range(self.levels, 0, -1)):
            x = F.interpolate(x, scale_factor=2, mode="nearest")
            x = self.ups[i](x)
            skip = pyramid[l - 1]
            if skip.shape != x.shape:
                raise ContractViolation(
                    f"pyramid level {l}: expected shape {tuple(x.shape)}, "
                    f"got {tuple(skip.shape)}")
            x = F.silu(x + self.skips[i](skip))
        return torch.sigmoid(self.final(x))


class CombineLatents(nn.Module):
    """Concat two latent codes and project back to 3 channels with a 1x1 conv
    initialized to average the two copies."""

    def __init__(self, dtype: torch.dtype = torch.float32):
        super().__init__()
        self.proj = nn.Conv2d(2 * LATENT_CHANNELS, LATENT_CHANNELS, 1, dtype=dtype)
        with torch.no_grad():
            self.proj.weight.zero_()
            self.proj.bias.zero_()
            for k in range(LATENT_CHANNELS):
                self.proj.weight[k, k, 0, 0] = 0.5
                self.proj.weight[k, k + LATENT_CHANNELS, 0, 0] = 0.5

    def forward(self, z_deg: torch.Tensor, z_clean: torch.Tensor) -> torch.Tensor:
        if z_deg.shape != z_clean.shape:
            raise ContractViolation(
                f"latent shape mismatch: {tuple(z_deg.shape)} vs {tuple(z_clean.shape)}")
        return self.proj(torch.cat([z_deg, z_clean], dim=1))
