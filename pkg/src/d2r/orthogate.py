"""Orthogonal gated projection: channel and spatial disentanglement gating.

Each gate is built on a 1x1 convolution whose square matrix is constrained to
the Stiefel manifold, followed by a bias-free 3x3 depthwise convolution. The
channel gate comes from global average pooling, the spatial gate from the
channel mean of two axis-permuted branches.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from . import manifold
from .errors import ContractViolation
from .numerics import check_feature_map, pooled_stats, resize_bilinear


def _delta_depthwise(channels: int, dtype: torch.dtype) -> torch.Tensor:
    k = torch.zeros(channels, 1, 3, 3, dtype=dtype)
    k[:, 0, 1, 1] = 1.0
    return k


class OrthoGate(nn.Module):
    """Gating module for one encoder level of the degraded branch.

    channels is the post-encoder-block width (2c in the level's terms).
    All convolutions are bias-free so zero input maps to zero output.
    """

    def __init__(self, channels: int, generator: torch.Generator | None = None,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        self.channels = channels
        for name in ("w_ortho_ch", "w_ortho_h", "w_ortho_w"):
            w = manifold.random_orthogonal(channels, generator, dtype)
            self.register_parameter(name, manifold.tag_stiefel(nn.Parameter(w)))
        for name in ("dw_ch", "dw_h", "dw_w"):
            self.register_parameter(name, nn.Parameter(_delta_depthwise(channels, dtype)))

    def _oconv_dconv(self, x: torch.Tensor, w: torch.Tensor, dw: torch.Tensor) -> torch.Tensor:
        y = F.conv2d(x, w.unsqueeze(-1).unsqueeze(-1))
        return F.conv2d(y, dw, padding=1, groups=self.channels)

    def channel_gate(self, x: torch.Tensor):
        """Returns (e1, c_gate, gated): e1 feeds the spatial branches."""
        check_feature_map(x)
        if x.shape[1] != self.channels:
            raise ContractViolation(
                f"expected {self.channels} channels, got {x.shape[1]}"
            )
        e1 = self._oconv_dconv(x, self.w_ortho_ch, self.dw_ch)
        c_gate = torch.sigmoid(pooled_stats(e1, "global_avg"))
        return e1, c_gate, c_gate * x

    def spatial_branch(self, e1: torch.Tensor, axis: str) -> torch.Tensor:
        """Resize to a (C, C) square, fold the chosen spatial axis onto the
        channel axis, apply the orthogonal 1x1 + depthwise conv there, then
        restore the original layout and size."""
        check_feature_map(e1)
        n, c, h, w = e1.shape
        if c != self.channels:
            raise ContractViolation(f"expected {self.channels} channels, got {c}")
        y = resize_bilinear(e1, c, c)
        if axis == "height":
            y = y.permute(0, 2, 1, 3)
            y = self._oconv_dconv(y, self.w_ortho_h, self.dw_h)
            y = y.permute(0, 2, 1, 3)
        elif axis == "width":
            y = y.permute(0, 3, 2, 1)
            y = self._oconv_dconv(y, self.w_ortho_w, self.dw_w)
            y = y.permute(0, 3, 2, 1)
        else:
            raise ContractViolation(f"axis must be 'height' or 'width', got {axis!r}")
        return resize_bilinear(y, h, w)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        e1, _, gated = self.channel_gate(x)
        s = self.spatial_branch(e1, "height") + self.spatial_branch(e1, "width")
        s_gate = torch.sigmoid(pooled_stats(s, "channel_avg"))
        return gated * s_gate
