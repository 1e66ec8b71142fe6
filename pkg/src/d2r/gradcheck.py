"""Finite-difference verification of analytic gradients.

Each registered component builds a float64 probe (inputs + parameters) and a
scalar-valued function; analytic gradients from reverse-mode autodiff are
compared entrywise against central differences.
"""

from __future__ import annotations

import torch

from .cdvae import Decoder
from .errors import ContractViolation
from .flows import GlowBlock
from .losses import fft_l1, hicdl_level_loss, kl_loss
from .numerics import ComplexPair
from .orthogate import OrthoGate

FD_STEP = 1e-5
FD_NOISE_FLOOR = 1e-7


def max_relative_error(fn, tensors: list[torch.Tensor], step: float = FD_STEP) -> float:
    """Compare autograd gradients of scalar fn against central differences
    over every element of every tensor in the list.

    Differences below FD_NOISE_FLOOR are treated as agreement: central
    differences of an O(1) loss carry roundoff noise around 1e-10, which
    would otherwise dominate the relative error wherever the true gradient
    is zero. Elements are addressed through unravel_index because some
    tensors (QR factors in particular) are non-contiguous and a flat
    reshape would silently perturb a copy.
    """
    for t in tensors:
        t.requires_grad_(True)
        if t.grad is not None:
            t.grad = None
    out = fn()
    out.backward()
    worst = 0.0
    with torch.no_grad():
        for t in tensors:
            grad = t.grad if t.grad is not None else torch.zeros_like(t)
            for i in range(t.numel()):
                idx = torch.unravel_index(torch.tensor(i), t.shape)
                orig = t[idx].item()
                t[idx] = orig + step
                hi = fn().item()
                t[idx] = orig - step
                lo = fn().item()
                t[idx] = orig
                fd = (hi - lo) / (2 * step)
                a = grad[idx].item()
                if abs(a - fd) < FD_NOISE_FLOOR:
                    continue
                worst = max(worst, abs(a - fd) / (abs(a) + abs(fd) + 1e-10))
    return worst


def _rng(seed=0):
    return torch.Generator().manual_seed(seed)


def _randn(shape, g, scale=1.0):
    return (torch.randn(shape, generator=g, dtype=torch.float64) * scale)


def check_quadratic() -> float:
    g = _rng(1)
    w = _randn((5, 5), g)
    return max_relative_error(lambda: (w * w).sum(), [w])


def check_hicdl() -> float:
    g = _rng(2)
    prev_d, cur_d = _randn((1, 4, 8, 8), g), _randn((1, 8, 4, 4), g)
    prev_c, cur_c = _randn((1, 4, 8, 8), g), _randn((1, 8, 4, 4), g)
    ts = [prev_d, cur_d, prev_c, cur_c]
    return max_relative_error(
        lambda: hicdl_level_loss(prev_d, cur_d, prev_c, cur_c, 0.5), ts)


def check_kl() -> float:
    g = _rng(3)
    mean, logvar = _randn((1, 4, 8, 8), g), _randn((1, 4, 8, 8), g, 0.5)
    return max_relative_error(lambda: kl_loss(mean, logvar), [mean, logvar])


def check_fft_l1() -> float:
    g = _rng(4)
    x, y = _randn((1, 4, 8, 8), g), _randn((1, 4, 8, 8), g)
    return max_relative_error(lambda: fft_l1(x, y), [x])


def check_orthogate() -> float:
    g = _rng(5)
    gate = OrthoGate(4, g, dtype=torch.float64)
    x = _randn((1, 4, 8, 8), g)
    probe = _randn((1, 4, 8, 8), g)
    tensors = [x] + list(gate.parameters())
    return max_relative_error(lambda: (gate(x) * probe).sum(), tensors)


def check_glow() -> float:
    g = _rng(6)
    block = GlowBlock(4, 8, "complex", g, dtype=torch.float64)
    re, im = _randn((1, 4, 8, 8), g), _randn((1, 4, 8, 8), g)
    with torch.no_grad():
        block.coupling.head_re.normal_(0, 0.05, generator=g)
        block.coupling.head_im.normal_(0, 0.05, generator=g)
        block.actnorm.initialize(ComplexPair(re, im))
    pr, pi = _randn((1, 4, 8, 8), g), _randn((1, 4, 8, 8), g)

    def fn():
        out = block(ComplexPair(re, im), "forward")
        return (out.re * pr).sum() + (out.im * pi).sum()

    tensors = [re, im] + list(block.parameters())
    return max_relative_error(fn, tensors)


def check_decode() -> float:
    g = _rng(7)
    dec = Decoder(4, 2, dtype=torch.float64)
    latent = _randn((1, 3, 2, 2), g)
    pyramid = [_randn((1, 4, 8, 8), g), _randn((1, 8, 4, 4), g)]
    probe = _randn((1, 3, 8, 8), g)
    tensors = [latent] + pyramid + list(dec.parameters())
    return max_relative_error(lambda: (dec(latent, pyramid) * probe).sum(), tensors)


COMPONENTS = {
    "quadratic": check_quadratic,
    "hicdl_level_loss": check_hicdl,
    "kl_loss": check_kl,
    "fft_l1": check_fft_l1,
    "orthogate_forward": check_orthogate,
    "glow_apply": check_glow,
    "decode": check_decode,
}


def grad_check(component: str) -> float:
    if component not in COMPONENTS:
        raise ContractViolation(
            f"unknown component {component!r}; registered: {sorted(COMPONENTS)}")
    return COMPONENTS[component]()
