"""Training objectives: hierarchical contrastive loss, KL, L1, FFT L1, and
the per-stage weighted compositions."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

from .errors import ContractViolation
from .numerics import cosine_sim, up_dup

EPS_CONTRAST = 1e-8


@dataclass
class TemperatureSchedule:
    """tau_i = tau0 * decay^(i-1): deeper levels contrast more sharply."""

    tau0: float = 0.5
    decay: float = 0.8

    def tau(self, level: int) -> float:
        t = self.tau0 * self.decay ** (level - 1)
        if t <= 0:
            raise ContractViolation(f"temperature must stay positive, got {t} at level {level}")
        return t


@dataclass
class LossReport:
    """Named scalar map; total is the weighted sum of the parts."""

    parts: dict[str, float] = field(default_factory=dict)
    total: float = 0.0

    def items(self):
        yield from self.parts.items()
        yield "total", self.total


def hicdl_level_loss(e_deg_prev, e_deg_cur, e_clean_prev, e_clean_cur,
                     tau: float, swap_roles: bool = False) -> torch.Tensor:
    """Contrastive term for one encoder level.

    The positive pairs the discarded residual against the clean input
    feature; the negative pairs the retained outputs of both branches.
    swap_roles exchanges the two similarities for ablation.
    """
    if tau <= 0:
        raise ContractViolation(f"tau must be positive, got {tau}")
    s_neg = cosine_sim(e_deg_cur, e_clean_cur)
    s_pos = cosine_sim(e_deg_prev - up_dup(e_deg_cur), e_clean_prev)
    if swap_roles:
        s_pos, s_neg = s_neg, s_pos
    num = torch.exp(s_pos / tau)
    return -torch.log(num / (num + torch.exp(s_neg / tau) + EPS_CONTRAST))


def kl_loss(mean: torch.Tensor, logvar: torch.Tensor) -> torch.Tensor:
    """Mean-per-element KL of N(mean, e^logvar) against the unit Gaussian."""
    if mean.shape != logvar.shape:
        raise ContractViolation(
            f"shape mismatch: {tuple(mean.shape)} vs {tuple(logvar.shape)}")
    return 0.5 * (mean ** 2 + torch.exp(logvar) - logvar - 1.0).mean()


def l1_loss(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    if x.shape != y.shape:
        raise ContractViolation(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
    return (x - y).abs().mean()


def fft_l1(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Mean absolute spectrum difference, real and imaginary parts as
    separate absolute terms, 2-D DFT per channel."""
    if x.shape != y.shape:
        raise ContractViolation(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
    fx = torch.fft.fft2(x)
    fy = torch.fft.fft2(y)
    d = fx - fy
    return d.real.abs().mean() + d.imag.abs().mean()


STAGE_PARTS = {
    1: ("rec", "kl", "fft"),
    2: ("rec", "fft", "contrast"),
    3: ("rec", "fft"),
}


def stage_loss(stage: int, parts: dict, weights: dict | None = None) -> tuple:
    """Weighted stage composition. parts values are scalar tensors; contrast
    may be a per-level list. Returns (total tensor, LossReport)."""
    if stage not in STAGE_PARTS:
        raise ContractViolation(f"stage must be 1|2|3, got {stage}")
    w = dict(rec=1.0, fft=0.1, kl=1e-6, contrast=0.1)
    w.update(weights or {})
    report = LossReport()
    total = None
    for name in STAGE_PARTS[stage]:
        if name not in parts:
            raise ContractViolation(f"stage {stage} loss is missing part {name!r}")
        value = parts[name]
        if name == "contrast":
            for i, v in enumerate(value, start=1):
                report.parts[f"contrast{i}"] = float(v.detach())
            value = sum(value)
        term = w[name] * value
        report.parts[name] = float(value.detach())
        total = term if total is None else total + term
    report.total = float(total.detach())
    return total, report
