"""First-order optimization on the Stiefel manifold and unitary polar factors.

Square orthogonal matrices (W^T W = I) are updated only through
tangent-project + QR-retract steps, so the orthogonality defect never grows.
The unitary factor of a free complex matrix is extracted by polar
decomposition (SVD) each forward pass; gradients flow through the SVD.
"""

from __future__ import annotations

import torch

from .errors import ContractViolation, DegenerateKernel, SingularRetraction

SINGULAR_TOL = 1e-12


def sym(a: torch.Tensor) -> torch.Tensor:
    return 0.5 * (a + a.transpose(-1, -2))


def orthogonality_defect(w: torch.Tensor) -> float:
    eye = torch.eye(w.shape[-1], dtype=w.dtype, device=w.device)
    return (w.transpose(-1, -2) @ w - eye).norm().item()


def random_orthogonal(n: int, generator: torch.Generator | None = None,
                      dtype: torch.dtype = torch.float32) -> torch.Tensor:
    a = torch.randn(n, n, generator=generator, dtype=torch.float64)
    q = retract_qr(torch.eye(n, dtype=torch.float64), a - torch.eye(n, dtype=torch.float64))
    return q.to(dtype).contiguous()


def tangent_project(w: torch.Tensor, g: torch.Tensor) -> torch.Tensor:
    """Project an ambient gradient onto the tangent space at W: g - W sym(W^T g)."""
    if w.shape != g.shape:
        raise ContractViolation(f"shape mismatch: W {tuple(w.shape)} vs g {tuple(g.shape)}")
    return g - w @ sym(w.transpose(-1, -2) @ g)


def retract_qr(w: torch.Tensor, xi: torch.Tensor) -> torch.Tensor:
    """Q factor of thin QR of (W + xi), with R's diagonal normalized positive."""
    if w.shape != xi.shape:
        raise ContractViolation(f"shape mismatch: W {tuple(w.shape)} vs xi {tuple(xi.shape)}")
    q, r = torch.linalg.qr(w + xi)
    diag = torch.diagonal(r, dim1=-2, dim2=-1)
    if bool((diag.abs() < SINGULAR_TOL).any()):
        raise SingularRetraction("W + xi is rank deficient; retraction undefined")
    signs = torch.sign(diag)
    return q * signs.unsqueeze(-2)


def riemannian_step(w: torch.Tensor, g: torch.Tensor, eta: float) -> torch.Tensor:
    if eta <= 0:
        raise ContractViolation(f"eta must be positive, got {eta}")
    return retract_qr(w, -eta * tangent_project(w, g))


def polar_unitary(w_re: torch.Tensor, w_im: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Unitary polar factor U of W = w_re + j*w_im via complex SVD (U = A B^H).

    U is the closest unitary matrix to W in Frobenius norm; W = U * (B S B^H)
    with the second factor positive semidefinite.
    """
    if w_re.shape != w_im.shape or w_re.shape[-1] != w_re.shape[-2]:
        raise ContractViolation(
            f"polar_unitary needs square matching matrices, got {tuple(w_re.shape)} / "
            f"{tuple(w_im.shape)}"
        )
    w = torch.complex(w_re, w_im)
    a, s, bh = torch.linalg.svd(w)
    if bool((s < SINGULAR_TOL).any()):
        raise DegenerateKernel(
            f"matrix is numerically singular (min singular value {s.min().item():.3e})"
        )
    u = a @ bh
    return u.real, u.imag


def tag_stiefel(p: torch.nn.Parameter) -> torch.nn.Parameter:
    """Mark a parameter as living on the Stiefel manifold (updated only by
    riemannian_step, never by a Euclidean optimizer)."""
    p.stiefel = True
    return p


def is_stiefel(p: torch.Tensor) -> bool:
    return bool(getattr(p, "stiefel", False))


class RiemannianSGD(torch.optim.Optimizer):
    """Plain projected gradient step with QR retraction for Stiefel parameters."""

    def __init__(self, params, lr: float):
        if lr <= 0:
            raise ContractViolation(f"lr must be positive, got {lr}")
        super().__init__(params, dict(lr=lr))

    @torch.no_grad()
    def step(self, closure=None):
        loss = None if closure is None else closure()
        for group in self.param_groups:
            for p in group["params"]:
                if p.grad is None:
                    continue
                p.copy_(riemannian_step(p, p.grad, group["lr"]))
        return loss
