"""Executable property suites behind the `verify` CLI subcommand.

Each suite returns (name, passed, detail) rows; the full set mirrors the
package's acceptance checks so they can run without a test framework.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F

from . import gradcheck, manifold
from .cimf import CIMFNet
from .config import full_scale
from .data import psnr
from .flows import GlowBlock
from .losses import hicdl_level_loss, kl_loss
from .numerics import ComplexPair, complex_conv, cosine_sim, pixel_shuffle, \
    pixel_unshuffle, resize_bilinear, up_dup
from .pipeline import RestorationModel, count_parameters

Row = tuple[str, bool, str]


def _tol(dtype, f32, f64):
    return f32 if dtype == torch.float32 else f64


def _rand_block(channels, hidden, arity, seed, dtype):
    g = torch.Generator().manual_seed(seed)
    block = GlowBlock(channels, hidden, arity, g, dtype)
    with torch.no_grad():
        block.coupling.head_re.normal_(0, 0.1, generator=g)
        if arity == "complex":
            block.coupling.head_im.normal_(0, 0.1, generator=g)
    return block, g


@torch.no_grad()
def suite_invertibility(dtype) -> list[Row]:
    rows = []
    tol = _tol(dtype, 1e-5, 1e-10)
    for arity in ("real", "complex"):
        block, g = _rand_block(4, 8, arity, 11, dtype)
        worst = 0.0
        for i in range(100):
            if arity == "complex":
                x = ComplexPair(torch.randn(2, 4, 8, 8, generator=g, dtype=dtype),
                                torch.randn(2, 4, 8, 8, generator=g, dtype=dtype))
                y = block(block(x, "forward"), "inverse")
                num = (y.re - x.re).norm() + (y.im - x.im).norm()
                den = x.re.norm() + x.im.norm()
            else:
                x = torch.randn(2, 4, 8, 8, generator=g, dtype=dtype)
                y = block(block(x, "forward"), "inverse")
                num, den = (y - x).norm(), x.norm()
            worst = max(worst, float(num / den))
        rows.append((f"glow_roundtrip_{arity}_{str(dtype)[6:]}", worst <= tol,
                     f"max rel err {worst:.3e} (tol {tol:.0e})"))
    # full-pipeline kept-set replay
    g = torch.Generator().manual_seed(13)
    net = CIMFNet(3, 4, steps=2, hidden=8, generator=g, dtype=dtype)
    pyr = [torch.randn(2, 4, 32, 32, generator=g, dtype=dtype),
           torch.randn(2, 8, 16, 16, generator=g, dtype=dtype),
           torch.randn(2, 16, 8, 8, generator=g, dtype=dtype)]
    with torch.no_grad():
        kept = net.decompose(pyr)
        back = net.invert(kept)
    worst = max(float((a - b).norm() / (b.norm() + 1e-30))
                for a, b in zip(back, pyr))
    tol_replay = _tol(dtype, 1e-5, 1e-9)
    rows.append(("cimf_kept_set_replay", worst <= tol_replay,
                 f"max rel err {worst:.3e} (tol {tol_replay:.0e})"))
    return rows


def suite_cimf_identity(dtype) -> list[Row]:
    rows = []
    g = torch.Generator().manual_seed(17)
    for levels in (1, 2, 3):
        net = CIMFNet(levels, 4, steps=2, hidden=8, generator=g, dtype=dtype)
        net.configure_identity()
        pyr = [torch.randn(2, 4 * 2 ** l, 32 // 2 ** l, 32 // 2 ** l,
                           generator=g, dtype=dtype) for l in range(levels)]
        with torch.no_grad():
            out = net(pyr)
        worst = max(float((a - b).abs().max()) for a, b in zip(out, pyr))
        tol = _tol(dtype, 1e-6, 0.0)
        rows.append((f"cimf_identity_L{levels}", worst <= tol,
                     f"max abs err {worst:.3e} (tol {tol:.0e})"))
    return rows


def suite_manifold(dtype) -> list[Row]:
    rows = []
    g = torch.Generator().manual_seed(19)
    w = manifold.random_orthogonal(8, g, torch.float64)
    for _ in range(10_000):
        grad = torch.randn(8, 8, generator=g, dtype=torch.float64)
        w = manifold.riemannian_step(w, grad, 1e-2)
    defect = manifold.orthogonality_defect(w)
    rows.append(("stiefel_drift_10000_steps", defect <= 1e-8,
                 f"defect {defect:.3e} (tol 1e-8)"))
    worst_unitary, worst_det = 0.0, 0.0
    for i in range(100):
        wr = torch.randn(6, 6, generator=g, dtype=torch.float64)
        wi = torch.randn(6, 6, generator=g, dtype=torch.float64)
        ur, ui = manifold.polar_unitary(wr, wi)
        u = torch.complex(ur, ui)
        eye = torch.eye(6, dtype=torch.complex128)
        worst_unitary = max(worst_unitary,
                            float((u.conj().T @ u - eye).norm()))
        worst_det = max(worst_det, abs(abs(complex(torch.linalg.det(u))) - 1.0))
    rows.append(("polar_unitary_constraint", worst_unitary <= 1e-10,
                 f"max defect {worst_unitary:.3e} (tol 1e-10)"))
    rows.append(("polar_unit_determinant", worst_det <= 1e-6,
                 f"max |det|-1 {worst_det:.3e} (tol 1e-6)"))
    return rows


def suite_complex_conv(dtype) -> list[Row]:
    g = torch.Generator().manual_seed(23)
    worst = 0.0
    for i in range(100):
        c = 3
        x = ComplexPair(torch.randn(1, c, 6, 6, generator=g, dtype=dtype),
                        torch.randn(1, c, 6, 6, generator=g, dtype=dtype))
        wr = torch.randn(c, c, 1, 1, generator=g, dtype=dtype) * 0.5
        wi = torch.randn(c, c, 1, 1, generator=g, dtype=dtype) * 0.5
        out = complex_conv(x, wr, wi)
        # oracle: stacked real convolution by [[w_re, -w_im], [w_im, w_re]]
        stacked = torch.cat([x.re, x.im], dim=1)
        top = torch.cat([wr, -wi], dim=1)
        bot = torch.cat([wi, wr], dim=1)
        ref = F.conv2d(stacked, torch.cat([top, bot], dim=0))
        err = float((torch.cat([out.re, out.im], dim=1) - ref).abs().max())
        worst = max(worst, err)
    return [("complex_conv_block_matrix_oracle", worst <= 1e-6,
             f"max abs err {worst:.3e} (tol 1e-6)")]


def suite_grad_checks(dtype) -> list[Row]:
    rows = []
    for name in ("hicdl_level_loss", "kl_loss", "fft_l1",
                 "orthogate_forward", "glow_apply", "decode"):
        err = gradcheck.grad_check(name)
        rows.append((f"grad_{name}", err <= 1e-5, f"max rel err {err:.3e} (tol 1e-5)"))
    return rows


def suite_closed_form(dtype) -> list[Row]:
    rows = []
    # symmetric case: both similarities equal 1, so the loss is exactly log 2
    cur = torch.ones(1, 8, 4, 4, dtype=torch.float64)
    prev_clean = torch.ones(1, 4, 8, 8, dtype=torch.float64)
    loss = float(hicdl_level_loss(2 * prev_clean, cur, prev_clean, cur, 0.5))
    rows.append(("hicdl_symmetric_log2", abs(loss - math.log(2)) <= 1e-6,
                 f"{loss:.9f} vs log 2 (tol 1e-6)"))
    kl = float(kl_loss(torch.ones(1, 3, 4, 4), torch.zeros(1, 3, 4, 4)))
    rows.append(("kl_unit_mean", abs(kl - 0.5) <= 1e-9, f"{kl:.12f} vs 0.5 (tol 1e-9)"))
    x = torch.full((1, 3, 16, 16), 0.4, dtype=torch.float64)
    p = float(psnr(x, x + 0.1))
    rows.append(("psnr_offset_20db", abs(p - 20.0) <= 1e-9, f"{p:.12f} vs 20 (tol 1e-9)"))
    return rows


def suite_param_budget(dtype) -> list[Row]:
    model = RestorationModel(full_scale())
    n = count_parameters(model)["restoration"]
    ok = 500_000 <= n <= 2_000_000
    return [("full_scale_restoration_params", ok,
             f"{n} params (window [0.5M, 2.0M])")]


def suite_primitives(dtype) -> list[Row]:
    rows = []
    g = torch.Generator().manual_seed(29)
    x = torch.randn(2, 8, 12, 12, generator=g, dtype=dtype)
    rows.append(("pixel_shuffle_inverse",
                 bool((pixel_shuffle(pixel_unshuffle(x, 2), 2) == x).all()),
                 "bit-equal round trip"))
    a = torch.randn(1, 3, 5, 5, generator=g, dtype=dtype)
    b = torch.randn(1, 3, 5, 5, generator=g, dtype=dtype)
    d = abs(float(cosine_sim(2.5 * a, 0.3 * b) - cosine_sim(a, b)))
    rows.append(("cosine_scale_invariance", d <= 1e-6, f"delta {d:.3e}"))
    y = resize_bilinear(a, 13, 7)
    ok = float(y.min()) >= float(a.min()) - 1e-6 and float(y.max()) <= float(a.max()) + 1e-6
    rows.append(("resize_range_preserved", ok,
                 f"[{float(y.min()):.4f},{float(y.max()):.4f}] within input range"))
    u = torch.randn(1, 8, 4, 4, generator=g, dtype=dtype)
    rows.append(("up_dup_shape", up_dup(u).shape == (1, 4, 8, 8), "(1,8,4,4)->(1,4,8,8)"))
    return rows


SUITES = {
    "invertibility": suite_invertibility,
    "cimf_identity": suite_cimf_identity,
    "manifold": suite_manifold,
    "complex_conv": suite_complex_conv,
    "grad_checks": suite_grad_checks,
    "closed_form": suite_closed_form,
    "param_budget": suite_param_budget,
    "primitives": suite_primitives,
}


def run_verification(name_filter: str | None = None, f64: bool = False,
                     printer=print) -> bool:
    dtype = torch.float64 if f64 else torch.float32
    all_ok = True
    for suite_name, suite in SUITES.items():
        if name_filter and name_filter not in suite_name:
            continue
        for name, ok, detail in suite(dtype):
            all_ok &= ok
            printer(f"{'PASS' if ok else 'FAIL'}  {suite_name}/{name}  {detail}")
    return all_ok
