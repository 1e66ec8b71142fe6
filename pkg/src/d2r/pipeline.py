"""Three-stage training orchestration, optimizer wiring, evaluation,
checkpointing, and gradient verification.

Stage 1 trains the clean encoder/decoder as a plain VAE. Stage 2 trains the
gated degraded branch against the frozen clean branch with the contrastive
disentanglement loss. Stage 3 freezes both branches and trains only the
latent restorer and the invertible fusion network.

Stiefel-tagged parameters are updated exclusively by Riemannian steps; all
other parameters use AdamW with zero weight decay. Both share a cosine
learning-rate schedule.
"""

from __future__ import annotations

import math
from pathlib import Path

import torch
import torch.nn as nn

from . import data as data_mod
from .cdvae import CombineLatents, Decoder, Encoder
from .checkpoint import load_checkpoint, save_checkpoint
from .cimf import CIMFNet
from .config import ModelConfig, parse_config
from .errors import CheckpointError, ContractViolation, NumericFault
from .larenet import build_restorer
from .losses import (TemperatureSchedule, hicdl_level_loss, kl_loss, l1_loss,
                     fft_l1, stage_loss)
from .manifold import RiemannianSGD, is_stiefel

TRAIN_PREFIX = "train_state."


class RestorationModel(nn.Module):
    """All learnable components of the dual-path pipeline."""

    def __init__(self, cfg: ModelConfig, dtype: torch.dtype = torch.float32):
        super().__init__()
        g = torch.Generator().manual_seed(cfg.seed)
        c, L = cfg.base_channels, cfg.levels
        self.cfg = cfg
        # default conv initializers draw from the global RNG; fork and seed it
        # so two constructions with the same config are bit-identical
        with torch.random.fork_rng():
            torch.manual_seed(cfg.seed)
            self.enc_clean = Encoder(c, L, gated=False, generator=g, dtype=dtype)
            self.dec_clean = Decoder(c, L, dtype=dtype)
            self.enc_deg = Encoder(c, L, gated=True, generator=g, dtype=dtype)
            self.dec_deg = Decoder(c, L, dtype=dtype)
            self.combine = CombineLatents(dtype=dtype)
            self.cimf = CIMFNet(L, c, cfg.glow_steps, cfg.glow_hidden or None,
                                generator=g, dtype=dtype)
            self.larenet = build_restorer(cfg.restorer_name,
                                          channels=cfg.latent_channels,
                                          blocks=cfg.restorer_blocks,
                                          hidden=cfg.restorer_hidden, dtype=dtype)

    def restore(self, degraded: torch.Tensor, stochastic: bool = False,
                generator: torch.Generator | None = None) -> torch.Tensor:
        trace = self.enc_deg(degraded, stochastic, generator)
        z = self.larenet(trace.sample if stochastic else trace.mean)
        pyramid = self.cimf(trace.pyramid)
        return self.dec_clean(z, pyramid)

    def stage_modules(self, stage: int) -> list[nn.Module]:
        if stage == 1:
            return [self.enc_clean, self.dec_clean]
        if stage == 2:
            return [self.enc_deg, self.dec_deg, self.combine]
        if stage == 3:
            return [self.cimf, self.larenet]
        raise ContractViolation(f"stage must be 1|2|3, got {stage}")


def cosine_lr(step: int, total: int, initial: float, floor: float) -> float:
    t = min(step, total) / max(total, 1)
    return floor + 0.5 * (initial - floor) * (1.0 + math.cos(math.pi * t))


def split_params(modules: list[nn.Module]):
    euclid, stiefel = [], []
    seen = set()
    for m in modules:
        for p in m.parameters():
            if id(p) in seen:
                continue
            seen.add(id(p))
            (stiefel if is_stiefel(p) else euclid).append(p)
    return euclid, stiefel


class MetricsLog:
    """Tab-separated lines: step, stage, name, value."""

    def __init__(self, path: str | Path, resume: bool = False):
        self.path = Path(path)
        self.fh = open(self.path, "a" if resume else "w", encoding="utf-8")

    def write(self, step: int, stage: int, items):
        for name, value in items:
            self.fh.write(f"{step}\t{stage}\t{name}\t{value:.9e}\n")
        self.fh.flush()

    def close(self):
        self.fh.close()


def _batch(pairs, size, generator):
    idx = torch.randint(len(pairs), (size,), generator=generator)
    clean = torch.cat([pairs[i].clean for i in idx], dim=0)
    deg = torch.cat([pairs[i].degraded for i in idx], dim=0)
    return clean, deg


def _stage_forward(model: RestorationModel, stage: int, clean, deg,
                   cfg: ModelConfig, g_sample: torch.Generator):
    tau = TemperatureSchedule(cfg.tau0, cfg.tau_decay)
    weights = dict(rec=cfg.lambda_rec, fft=cfg.lambda_fft,
                   kl=cfg.lambda_kl, contrast=cfg.lambda_con)
    if stage == 1:
        trace = model.enc_clean(clean, stochastic=True, generator=g_sample)
        recon = model.dec_clean(trace.sample, trace.pyramid)
        parts = dict(rec=l1_loss(recon, clean),
                     kl=kl_loss(trace.mean, trace.logvar),
                     fft=fft_l1(recon, clean))
        return stage_loss(1, parts, weights)
    if stage == 2:
        with torch.no_grad():
            trace_clean = model.enc_clean(clean)
        trace_deg = model.enc_deg(deg)
        z = model.combine(trace_deg.mean, trace_clean.mean)
        rec_deg = model.dec_deg(z, trace_deg.pyramid)
        rec_clean = model.dec_clean(trace_clean.mean, trace_deg.pyramid)
        contrast = [hicdl_level_loss(trace_deg.e[i - 1], trace_deg.e[i],
                                     trace_clean.e[i - 1], trace_clean.e[i],
                                     tau.tau(i), cfg.swap_contrast_roles)
                    for i in range(1, cfg.levels + 1)]
        parts = dict(rec=l1_loss(rec_deg, deg) + l1_loss(rec_clean, clean),
                     fft=fft_l1(rec_deg, deg) + fft_l1(rec_clean, clean),
                     contrast=contrast)
        total, report = stage_loss(2, parts, weights)
        if cfg.lambda_kl_stage2 > 0:
            kl = kl_loss(trace_deg.mean, trace_deg.logvar)
            total = total + cfg.lambda_kl_stage2 * kl
            report.parts["kl"] = float(kl.detach())
            report.total = float(total.detach())
        return total, report
    # stage 3
    with torch.no_grad():
        trace = model.enc_deg(deg, stochastic=cfg.stochastic_stage3,
                              generator=g_sample)
    z = model.larenet(trace.sample if cfg.stochastic_stage3 else trace.mean)
    pyramid = model.cimf([t.detach() for t in trace.pyramid])
    restored = model.dec_clean(z, pyramid)
    parts = dict(rec=l1_loss(restored, clean), fft=fft_l1(restored, clean))
    return stage_loss(3, parts, weights)


def train_stage(stage: int, cfg: ModelConfig, pairs, out_dir: str | Path,
                prerequisite: str | Path | None = None,
                resume: str | Path | None = None,
                dtype: torch.dtype = torch.float32,
                checkpoint_every: int | None = None,
                halt_at: int | None = None) -> tuple[Path, Path]:
    """Run one training stage; returns (checkpoint path, metrics path)."""
    if stage not in (1, 2, 3):
        raise ContractViolation(f"stage must be 1|2|3, got {stage}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = RestorationModel(cfg, dtype)

    g_data = torch.Generator().manual_seed(cfg.seed * 7919 + stage)
    g_sample = torch.Generator().manual_seed(cfg.seed * 104729 + stage)
    start_step = 0

    if resume is not None:
        cfg_text, tensors = load_checkpoint(resume)
        if parse_config(cfg_text).hash() != cfg.hash():
            raise CheckpointError("resume checkpoint config does not match")
        train_state = {k[len(TRAIN_PREFIX):]: v for k, v in tensors.items()
                       if k.startswith(TRAIN_PREFIX)}
        model_state = {k: v for k, v in tensors.items()
                       if not k.startswith(TRAIN_PREFIX)}
        model.load_state_dict(model_state)
        if int(train_state["stage"].item()) != stage:
            raise CheckpointError("resume checkpoint belongs to a different stage")
        start_step = int(train_state["step"].item())
        g_data.set_state(train_state["rng_data"])
        g_sample.set_state(train_state["rng_sample"])
    elif stage >= 2:
        if prerequisite is None:
            raise CheckpointError(f"stage {stage} requires a stage-{stage - 1} checkpoint")
        cfg_text, tensors = load_checkpoint(prerequisite)
        model_state = {k: v for k, v in tensors.items()
                       if not k.startswith(TRAIN_PREFIX)}
        model.load_state_dict(model_state)
        if stage == 2:
            # degraded branch starts from the clean branch weights
            model.enc_deg.load_state_dict(model.enc_clean.state_dict(), strict=False)
            model.dec_deg.load_state_dict(model.dec_clean.state_dict())

    for p in model.parameters():
        p.requires_grad_(False)
    trained = model.stage_modules(stage)
    for m in trained:
        for p in m.parameters():
            p.requires_grad_(True)

    euclid, stiefel = split_params(trained)
    lr0 = cfg.lr(stage)
    opt = torch.optim.AdamW(euclid, lr=lr0, weight_decay=0.0)
    opt_stiefel = RiemannianSGD(stiefel, lr=lr0 * cfg.lr_stiefel_scale) if stiefel else None
    if resume is not None:
        _load_opt_state(opt, train_state)

    total_steps = cfg.steps(stage)
    batch = cfg.batch(stage)
    metrics = MetricsLog(out_dir / f"stage{stage}_metrics.tsv", resume=resume is not None)
    ckpt_path = out_dir / f"stage{stage}.ckpt"

    def save(step):
        tensors = dict(model.state_dict())
        tensors[TRAIN_PREFIX + "stage"] = torch.tensor(stage, dtype=torch.int64)
        tensors[TRAIN_PREFIX + "step"] = torch.tensor(step, dtype=torch.int64)
        tensors[TRAIN_PREFIX + "rng_data"] = g_data.get_state()
        tensors[TRAIN_PREFIX + "rng_sample"] = g_sample.get_state()
        _store_opt_state(opt, tensors)
        save_checkpoint(ckpt_path, cfg.to_text(), tensors)

    for step in range(start_step, total_steps):
        lr = cosine_lr(step, total_steps, lr0, cfg.lr_floor)
        for group in opt.param_groups:
            group["lr"] = lr
        if opt_stiefel is not None:
            for group in opt_stiefel.param_groups:
                group["lr"] = lr * cfg.lr_stiefel_scale
        clean, deg = _batch(pairs, batch, g_data)
        if dtype is not torch.float32:
            clean, deg = clean.to(dtype), deg.to(dtype)
        opt.zero_grad(set_to_none=True)
        if opt_stiefel is not None:
            opt_stiefel.zero_grad(set_to_none=True)
        total, report = _stage_forward(model, stage, clean, deg, cfg, g_sample)
        if not torch.isfinite(total):
            save(step)  # parameters are still the last good ones
            metrics.close()
            raise NumericFault(f"non-finite loss at stage {stage} step {step}; "
                               f"last good checkpoint retained at {ckpt_path}")
        total.backward()
        opt.step()
        if opt_stiefel is not None:
            opt_stiefel.step()
        metrics.write(step, stage, report.items())
        if checkpoint_every and (step + 1) % checkpoint_every == 0:
            save(step + 1)
        if halt_at is not None and step + 1 >= halt_at:
            # simulated interruption: checkpoint and stop short of total_steps
            save(step + 1)
            metrics.close()
            return ckpt_path, metrics.path
    save(total_steps)
    metrics.close()
    return ckpt_path, metrics.path


def _store_opt_state(opt: torch.optim.AdamW, tensors: dict):
    for gi, group in enumerate(opt.param_groups):
        for pi, p in enumerate(group["params"]):
            state = opt.state.get(p)
            if not state:
                continue
            base = f"{TRAIN_PREFIX}adam.{gi}.{pi}."
            tensors[base + "step"] = state["step"].to(torch.int64) \
                if torch.is_tensor(state["step"]) else torch.tensor(int(state["step"]))
            tensors[base + "exp_avg"] = state["exp_avg"]
            tensors[base + "exp_avg_sq"] = state["exp_avg_sq"]


def _load_opt_state(opt: torch.optim.AdamW, train_state: dict):
    for gi, group in enumerate(opt.param_groups):
        for pi, p in enumerate(group["params"]):
            base = f"adam.{gi}.{pi}."
            if base + "exp_avg" not in train_state:
                continue
            opt.state[p] = dict(
                step=train_state[base + "step"].to(torch.float32),
                exp_avg=train_state[base + "exp_avg"].clone(),
                exp_avg_sq=train_state[base + "exp_avg_sq"].clone())


def load_model(ckpt_path: str | Path, dtype: torch.dtype = torch.float32
               ) -> tuple[RestorationModel, ModelConfig]:
    cfg_text, tensors = load_checkpoint(ckpt_path)
    cfg = parse_config(cfg_text)
    model = RestorationModel(cfg, dtype)
    model.load_state_dict({k: v for k, v in tensors.items()
                           if not k.startswith(TRAIN_PREFIX)})
    return model, cfg


def count_parameters(model: RestorationModel) -> dict[str, int]:
    restoration = sum(p.numel() for m in model.stage_modules(3) for p in m.parameters())
    total = sum(p.numel() for p in model.parameters())
    return dict(total=total, restoration=restoration)


def estimate_macs(model: RestorationModel, size: int = 256) -> int:
    """Multiply-accumulate estimate for one restore pass by intercepting
    every conv2d call during a probe forward."""
    import torch.nn.functional as F
    counter = dict(macs=0)
    orig = F.conv2d

    def counted(x, w, bias=None, stride=1, padding=0, dilation=1, groups=1):
        out = orig(x, w, bias, stride, padding, dilation, groups)
        cin_per_group = w.shape[1]
        counter["macs"] += out.numel() * cin_per_group * w.shape[2] * w.shape[3]
        return out

    F.conv2d = counted
    try:
        probe = torch.rand(1, 3, size, size,
                           generator=torch.Generator().manual_seed(0),
                           dtype=next(model.parameters()).dtype)
        with torch.no_grad():
            model.restore(probe)
    finally:
        F.conv2d = orig
    return counter["macs"]


def evaluate(ckpt_path: str | Path, pairs, report_path: str | Path | None = None,
             with_macs: bool = True) -> dict:
    """PSNR/SSIM per degradation kind plus parameter/compute accounting."""
    model, cfg = load_model(ckpt_path)
    model.eval()
    by_kind: dict[str, list] = {}
    for pair in pairs:
        with torch.no_grad():
            restored = model.restore(pair.degraded)
        by_kind.setdefault(pair.spec.kind, []).append(
            (data_mod.psnr(restored, pair.clean), data_mod.ssim(restored, pair.clean)))
    table = {}
    for kind, vals in by_kind.items():
        table[f"psnr_{kind}"] = sum(v[0] for v in vals) / len(vals)
        table[f"ssim_{kind}"] = sum(v[1] for v in vals) / len(vals)
    table.update({k: float(v) for k, v in count_parameters(model).items()})
    if with_macs:
        table["macs_256"] = float(estimate_macs(model, 256))
    if report_path is not None:
        with open(report_path, "w", encoding="utf-8") as fh:
            for k in sorted(table):
                fh.write(f"{k}\t{table[k]:.6f}\n")
    return table
