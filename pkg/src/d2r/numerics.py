"""Deterministic tensor primitives shared by every other module.

All feature maps are torch tensors in (batch, channel, height, width) layout.
Complex-valued maps are carried as a pair of real tensors (re, im) of identical
shape and dtype.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .errors import ContractViolation

EPS_SIM = 1e-8


def check_feature_map(x: torch.Tensor, name: str = "x") -> torch.Tensor:
    if x.dim() != 4:
        raise ContractViolation(f"{name} must be rank-4 (n,c,h,w), got shape {tuple(x.shape)}")
    if x.shape[0] < 1 or x.shape[1] < 1 or x.shape[2] < 1 or x.shape[3] < 1:
        raise ContractViolation(f"{name} has empty dimension: {tuple(x.shape)}")
    return x


@dataclass
class ComplexPair:
    """A complex feature map stored as paired real tensors: value = re + j*im."""

    re: torch.Tensor
    im: torch.Tensor

    def __post_init__(self):
        if self.re.shape != self.im.shape:
            raise ContractViolation(
                f"re/im shape mismatch: {tuple(self.re.shape)} vs {tuple(self.im.shape)}"
            )
        if self.re.dtype != self.im.dtype:
            raise ContractViolation(f"re/im dtype mismatch: {self.re.dtype} vs {self.im.dtype}")

    @property
    def shape(self):
        return self.re.shape

    @property
    def dtype(self):
        return self.re.dtype

    def conj(self) -> "ComplexPair":
        return ComplexPair(self.re, -self.im)

    def detach(self) -> "ComplexPair":
        return ComplexPair(self.re.detach(), self.im.detach())


def cplx_mul(a: ComplexPair, b: ComplexPair) -> ComplexPair:
    return ComplexPair(a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re)


def cplx_div(a: ComplexPair, b: ComplexPair) -> ComplexPair:
    denom = b.re * b.re + b.im * b.im
    return ComplexPair((a.re * b.re + a.im * b.im) / denom, (a.im * b.re - a.re * b.im) / denom)


def complex_conv(
    x: ComplexPair,
    w_re: torch.Tensor,
    w_im: torch.Tensor,
    stride: int = 1,
    padding: int = 0,
    groups: int = 1,
) -> ComplexPair:
    """Complex 2-D convolution on a (re, im) pair with real kernel pairs.

    Re_out = Re*w_re - Im*w_im, Im_out = Re*w_im + Im*w_re, where * is the
    usual cross-correlation-style convolution.
    """
    if w_re.shape != w_im.shape:
        raise ContractViolation(
            f"kernel shape mismatch: {tuple(w_re.shape)} vs {tuple(w_im.shape)}"
        )
    if x.re.shape[1] != w_re.shape[1] * groups:
        raise ContractViolation(
            f"input channels {x.re.shape[1]} incompatible with kernel {tuple(w_re.shape)} "
            f"(groups={groups})"
        )
    rr = F.conv2d(x.re, w_re, stride=stride, padding=padding, groups=groups)
    ii = F.conv2d(x.im, w_im, stride=stride, padding=padding, groups=groups)
    ri = F.conv2d(x.re, w_im, stride=stride, padding=padding, groups=groups)
    ir = F.conv2d(x.im, w_re, stride=stride, padding=padding, groups=groups)
    return ComplexPair(rr - ii, ri + ir)


def pixel_unshuffle(x: torch.Tensor, r: int) -> torch.Tensor:
    """(n,c,h,w) -> (n, c*r^2, h/r, w/r); output channel = c_src*r^2 + dy*r + dx."""
    check_feature_map(x)
    if x.shape[2] % r != 0 or x.shape[3] % r != 0:
        raise ContractViolation(
            f"spatial dims {x.shape[2]}x{x.shape[3]} not divisible by r={r}"
        )
    return F.pixel_unshuffle(x, r)


def pixel_shuffle(x: torch.Tensor, r: int) -> torch.Tensor:
    """Exact inverse of pixel_unshuffle: (n,c,h,w) -> (n, c/r^2, h*r, w*r)."""
    check_feature_map(x)
    if x.shape[1] % (r * r) != 0:
        raise ContractViolation(f"channels {x.shape[1]} not divisible by r^2={r * r}")
    return F.pixel_shuffle(x, r)


def up_dup(x: torch.Tensor) -> torch.Tensor:
    """Pixel-shuffle then channel duplication: (n,2c,h/2,w/2) -> (n,c,h,w).

    Shuffle by 2 yields c/2 channels at full resolution; each channel is then
    duplicated once so the result matches the pre-downsampling feature shape.
    """
    check_feature_map(x)
    if x.shape[1] % 4 != 0:
        raise ContractViolation(f"up_dup needs channels divisible by 4, got {x.shape[1]}")
    y = pixel_shuffle(x, 2)
    return torch.repeat_interleave(y, 2, dim=1)


def resize_bilinear(x: torch.Tensor, h: int, w: int) -> torch.Tensor:
    """Bilinear resize with half-pixel (align-corners-off) sampling."""
    check_feature_map(x)
    if h < 1 or w < 1:
        raise ContractViolation(f"target size must be >= 1, got ({h}, {w})")
    if (h, w) == (x.shape[2], x.shape[3]):
        return x
    return F.interpolate(x, size=(h, w), mode="bilinear", align_corners=False)


def pooled_stats(x: torch.Tensor, mode: str) -> torch.Tensor:
    check_feature_map(x)
    if mode == "global_avg":
        return x.mean(dim=(2, 3), keepdim=True)
    if mode == "channel_avg":
        return x.mean(dim=1, keepdim=True)
    raise ContractViolation(f"unknown pooling mode {mode!r}")


def cosine_sim(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Cosine similarity of the flattened tensors, with a zero-norm guard.

    Returns 0 when both arguments are all-zero (documented convention).
    """
    if a.shape != b.shape:
        raise ContractViolation(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    av = a.reshape(-1)
    bv = b.reshape(-1)
    return (av @ bv) / (av.norm() * bv.norm() + EPS_SIM)
