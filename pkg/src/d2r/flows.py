"""Real and complex invertible GLOW blocks with exact inverses.

A block is actnorm -> invertible 1x1 convolution -> affine coupling. The
complex 1x1 kernel is the unitary polar factor of a freely parameterized
complex matrix, recomputed each forward pass; the real 1x1 kernel is a
Stiefel matrix whose inverse is its transpose. Coupling scales are
parameterized in polar form with clamped log-magnitude so the inverse never
divides by anything smaller than e^-5.

No log-determinant is tracked: the blocks are feature transforms, not
density models.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from . import manifold
from .errors import ContractViolation, InitializationOrderError
from .numerics import ComplexPair, complex_conv, cplx_div, cplx_mul

RHO_CLAMP = 5.0
SCALE_FLOOR = 1e-6


def polar_factor_newton(w_re: torch.Tensor, w_im: torch.Tensor, iters: int = 25
                        ) -> tuple[torch.Tensor, torch.Tensor]:
    """Differentiable unitary polar factor via the Newton iteration
    X <- (X + X^-H)/2. Agrees with the SVD polar factor to machine precision
    but stays smooth through autograd even for clustered singular values."""
    x = torch.complex(w_re, w_im)
    x = x / x.norm() * (x.shape[-1] ** 0.5)
    for _ in range(iters):
        x_next = 0.5 * (x + torch.linalg.inv(x).conj().transpose(-1, -2))
        if (x_next - x).norm() < 1e-14 * x.norm():
            x = x_next
            break
        x = x_next
    return x.real, x.imag


def _clamped_scale(s: torch.Tensor) -> torch.Tensor:
    return torch.where(s.abs() < SCALE_FLOOR,
                       torch.full_like(s, SCALE_FLOOR) * torch.where(s < 0, -1.0, 1.0),
                       s)


class ActNorm(nn.Module):
    """Per-channel affine normalization with data-dependent frozen statistics.

    mu/sigma are computed once from the first batch seen and then frozen;
    s/b stay learnable. The complex variant keeps separate parameter sets for
    the real and imaginary components.
    """

    def __init__(self, channels: int, arity: str = "real", dtype: torch.dtype = torch.float32):
        super().__init__()
        if arity not in ("real", "complex"):
            raise ContractViolation(f"arity must be real|complex, got {arity!r}")
        self.arity = arity
        shape = (1, channels, 1, 1)
        parts = ("re", "im") if arity == "complex" else ("re",)
        for p in parts:
            self.register_buffer(f"mu_{p}", torch.zeros(shape, dtype=dtype))
            self.register_buffer(f"sigma_{p}", torch.ones(shape, dtype=dtype))
            self.register_parameter(f"s_{p}", nn.Parameter(torch.ones(shape, dtype=dtype)))
            self.register_parameter(f"b_{p}", nn.Parameter(torch.zeros(shape, dtype=dtype)))
        self.register_buffer("initialized", torch.zeros((), dtype=torch.bool))

    @torch.no_grad()
    def initialize(self, x):
        parts = self._parts(x)
        for name, t in parts:
            mu = t.mean(dim=(0, 2, 3), keepdim=True)
            sigma = t.std(dim=(0, 2, 3), keepdim=True, unbiased=False).clamp_min(SCALE_FLOOR)
            getattr(self, f"mu_{name}").copy_(mu)
            getattr(self, f"sigma_{name}").copy_(sigma)
        self.initialized.fill_(True)

    def configure_identity(self):
        with torch.no_grad():
            for p in ("re", "im") if self.arity == "complex" else ("re",):
                getattr(self, f"mu_{p}").zero_()
                getattr(self, f"sigma_{p}").fill_(1.0)
                getattr(self, f"s_{p}").fill_(1.0)
                getattr(self, f"b_{p}").zero_()
            self.initialized.fill_(True)
        return self

    def _parts(self, x):
        if self.arity == "complex":
            if not isinstance(x, ComplexPair):
                raise ContractViolation("complex actnorm expects a ComplexPair")
            return [("re", x.re), ("im", x.im)]
        if isinstance(x, ComplexPair):
            raise ContractViolation("real actnorm expects a plain tensor")
        return [("re", x)]

    def _apply_part(self, name: str, t: torch.Tensor, direction: str) -> torch.Tensor:
        mu = getattr(self, f"mu_{name}")
        sigma = getattr(self, f"sigma_{name}")
        s = _clamped_scale(getattr(self, f"s_{name}"))
        b = getattr(self, f"b_{name}")
        if direction == "forward":
            return (t - mu) / sigma * s + b
        return (t - b) / s * sigma + mu

    def forward(self, x, direction: str = "forward"):
        if not bool(self.initialized):
            if direction != "forward":
                raise InitializationOrderError("actnorm inverse before initialization")
            self.initialize(x)
        out = [self._apply_part(name, t, direction) for name, t in self._parts(x)]
        if self.arity == "complex":
            return ComplexPair(out[0], out[1])
        return out[0]


class Invertible1x1Real(nn.Module):
    """1x1 convolution by a Stiefel matrix; inverse is convolution by W^T."""

    def __init__(self, channels: int, generator: torch.Generator | None = None,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        w = manifold.random_orthogonal(channels, generator, dtype)
        self.w = manifold.tag_stiefel(nn.Parameter(w))

    def configure_identity(self):
        with torch.no_grad():
            self.w.copy_(torch.eye(self.w.shape[0], dtype=self.w.dtype))
        return self

    def forward(self, x: torch.Tensor, direction: str = "forward") -> torch.Tensor:
        w = self.w if direction == "forward" else self.w.transpose(0, 1)
        return F.conv2d(x, w.unsqueeze(-1).unsqueeze(-1))


class Invertible1x1Complex(nn.Module):
    """1x1 complex convolution by the unitary polar factor of a free matrix.

    The free parameter receives ordinary gradient updates; the unitary
    constraint is exact because the factor is extracted every forward pass.
    """

    def __init__(self, channels: int, generator: torch.Generator | None = None,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        # Spread singular values at init so the polar factor starts well away
        # from spectral degeneracy.
        q = manifold.random_orthogonal(channels, generator, dtype=torch.float64)
        d = torch.diag(torch.linspace(0.5, 1.5, channels, dtype=torch.float64))
        self.p_re = nn.Parameter((q @ d).to(dtype))
        self.p_im = nn.Parameter(torch.zeros(channels, channels, dtype=dtype))

    def configure_identity(self):
        with torch.no_grad():
            n = self.p_re.shape[0]
            self.p_re.copy_(torch.diag(torch.linspace(0.5, 1.5, n)).to(self.p_re.dtype))
            self.p_im.zero_()
        return self

    def kernel(self) -> tuple[torch.Tensor, torch.Tensor]:
        return polar_factor_newton(self.p_re, self.p_im)

    def forward(self, x: ComplexPair, direction: str = "forward") -> ComplexPair:
        u_re, u_im = self.kernel()
        if direction == "inverse":
            u_re, u_im = u_re.transpose(0, 1), -u_im.transpose(0, 1)
        return complex_conv(x, u_re.unsqueeze(-1).unsqueeze(-1),
                            u_im.unsqueeze(-1).unsqueeze(-1))


class AffineCoupling(nn.Module):
    """Half-channel affine coupling conditioned through a small conv stack.

    The conditioner is two 3x3 convolutions with a split nonlinearity plus a
    zero-initialized head, so every block starts as the identity. The scale is
    exp(clamp(rho)) * exp(j*theta) in the complex variant.
    """

    def __init__(self, channels: int, hidden: int, arity: str = "real",
                 generator: torch.Generator | None = None,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        if channels % 2 != 0:
            raise ContractViolation(f"coupling needs even channels, got {channels}")
        self.arity = arity
        half = channels // 2
        self.half = half

        def kernel(co, ci):
            k = torch.randn(co, ci, 3, 3, generator=generator, dtype=torch.float64)
            return nn.Parameter((k * (2.0 / (ci * 9)) ** 0.5).to(dtype))

        self.w1_re = kernel(hidden, half)
        self.w2_re = kernel(hidden, hidden)
        self.head_re = nn.Parameter(torch.zeros(2 * half, hidden, 3, 3, dtype=dtype))
        if arity == "complex":
            self.w1_im = kernel(hidden, half)
            self.w2_im = kernel(hidden, hidden)
            self.head_im = nn.Parameter(torch.zeros(2 * half, hidden, 3, 3, dtype=dtype))

    def _conditioner_complex(self, f1: ComplexPair):
        h = complex_conv(f1, self.w1_re, self.w1_im, padding=1)
        h = ComplexPair(F.silu(h.re), F.silu(h.im))
        h = complex_conv(h, self.w2_re, self.w2_im, padding=1)
        h = ComplexPair(F.silu(h.re), F.silu(h.im))
        out = complex_conv(h, self.head_re, self.head_im, padding=1)
        rho = out.re[:, :self.half].clamp(-RHO_CLAMP, RHO_CLAMP)
        theta = out.im[:, :self.half]
        gamma = ComplexPair(torch.exp(rho) * torch.cos(theta),
                            torch.exp(rho) * torch.sin(theta))
        beta = ComplexPair(out.re[:, self.half:], out.im[:, self.half:])
        return gamma, beta

    def _conditioner_real(self, f1: torch.Tensor):
        h = F.silu(F.conv2d(f1, self.w1_re, padding=1))
        h = F.silu(F.conv2d(h, self.w2_re, padding=1))
        out = F.conv2d(h, self.head_re, padding=1)
        gamma = torch.exp(out[:, :self.half].clamp(-RHO_CLAMP, RHO_CLAMP))
        return gamma, out[:, self.half:]

    def forward(self, x, direction: str = "forward"):
        if self.arity == "complex":
            if x.shape[1] != 2 * self.half:
                raise ContractViolation(
                    f"expected {2 * self.half} channels, got {x.shape[1]}")
            f1 = ComplexPair(x.re[:, :self.half], x.im[:, :self.half])
            f2 = ComplexPair(x.re[:, self.half:], x.im[:, self.half:])
            gamma, beta = self._conditioner_complex(f1)
            if direction == "forward":
                scaled = cplx_mul(f2, gamma)
                f2 = ComplexPair(scaled.re + beta.re, scaled.im + beta.im)
            else:
                f2 = cplx_div(ComplexPair(f2.re - beta.re, f2.im - beta.im), gamma)
            return ComplexPair(torch.cat([f1.re, f2.re], dim=1),
                               torch.cat([f1.im, f2.im], dim=1))
        if x.shape[1] != 2 * self.half:
            raise ContractViolation(f"expected {2 * self.half} channels, got {x.shape[1]}")
        f1, f2 = x[:, :self.half], x[:, self.half:]
        gamma, beta = self._conditioner_real(f1)
        f2 = f2 * gamma + beta if direction == "forward" else (f2 - beta) / gamma
        return torch.cat([f1, f2], dim=1)


class GlowBlock(nn.Module):
    """actnorm -> invertible 1x1 -> affine coupling, with an exact inverse."""

    def __init__(self, channels: int, hidden: int, arity: str = "real",
                 generator: torch.Generator | None = None,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        if arity not in ("real", "complex"):
            raise ContractViolation(f"arity must be real|complex, got {arity!r}")
        self.arity = arity
        self.actnorm = ActNorm(channels, arity, dtype)
        if arity == "complex":
            self.perm = Invertible1x1Complex(channels, generator, dtype)
        else:
            self.perm = Invertible1x1Real(channels, generator, dtype)
        self.coupling = AffineCoupling(channels, hidden, arity, generator, dtype)

    def configure_identity(self):
        self.actnorm.configure_identity()
        self.perm.configure_identity()
        with torch.no_grad():
            self.coupling.head_re.zero_()
            if self.arity == "complex":
                self.coupling.head_im.zero_()
        return self

    def forward(self, x, direction: str = "forward"):
        if direction == "forward":
            return self.coupling(self.perm(self.actnorm(x, "forward"), "forward"), "forward")
        if direction != "inverse":
            raise ContractViolation(f"direction must be forward|inverse, got {direction!r}")
        return self.actnorm(self.perm(self.coupling(x, "inverse"), "inverse"), "inverse")


def glow_apply(x, block: GlowBlock, direction: str = "forward"):
    return block(x, direction)
