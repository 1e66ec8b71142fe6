"""Latent restoration: pluggable shape-preserving transforms on the latent
code. The default backbone is a stack of zero-initialized residual conv
blocks, so an untrained restorer is exactly the identity."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ContractViolation
from .numerics import check_feature_map


class ResidualRestorer(nn.Module):
    def __init__(self, channels: int = 3, blocks: int = 6, hidden: int = 32,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        self.conv_in = nn.ModuleList()
        self.conv_out = nn.ModuleList()
        for _ in range(blocks):
            self.conv_in.append(nn.Conv2d(channels, hidden, 3, padding=1, dtype=dtype))
            out = nn.Conv2d(hidden, channels, 3, padding=1, dtype=dtype)
            with torch.no_grad():
                out.weight.zero_()
                out.bias.zero_()
            self.conv_out.append(out)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        check_feature_map(z)
        for cin, cout in zip(self.conv_in, self.conv_out):
            z = z + cout(F.silu(cin(z)))
        return z


RESTORER_REGISTRY: dict[str, type] = {"default_residual": ResidualRestorer}


def build_restorer(name: str, **kwargs) -> nn.Module:
    if name not in RESTORER_REGISTRY:
        raise ContractViolation(
            f"unknown restorer {name!r}; registered: {sorted(RESTORER_REGISTRY)}")
    return RESTORER_REGISTRY[name](**kwargs)


def restore_latent(z: torch.Tensor, restorer: nn.Module) -> torch.Tensor:
    check_feature_map(z)
    out = restorer(z)
    if out.shape != z.shape:
        raise ContractViolation(
            f"restorer changed shape: {tuple(z.shape)} -> {tuple(out.shape)}")
    return out
