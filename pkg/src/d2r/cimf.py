"""Complex invertible multiscale fusion over the background pyramid.

The decomposition walks the pyramid coarse-ward: the finest level passes
through a real GLOW stack, is pixel-unshuffled and split; one half is kept
and the other is fused with the next level as the real/imaginary parts of a
complex GLOW input. Assembly replays the wiring exactly backwards
(pixel-shuffle + channel concatenation), routing real-stream pieces back to
the scale that contributed the real input and imaginary-stream pieces to the
scale that contributed the imaginary input, so output shapes always equal
input shapes and identity-configured blocks give the identity map.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .errors import ContractViolation
from .flows import GlowBlock
from .numerics import ComplexPair, pixel_shuffle, pixel_unshuffle


def shape_schedule(c: int, h: int, w: int, levels: int):
    """Per-level (channels, height, width) plus the unshuffle/split
    intermediates used for validation and test generation."""
    if h % (2 ** levels) != 0 or w % (2 ** levels) != 0:
        raise ContractViolation(
            f"spatial size {h}x{w} not divisible by 2^{levels}")
    out = []
    for l in range(1, levels + 1):
        cl = c * 2 ** (l - 1)
        hl, wl = h // 2 ** (l - 1), w // 2 ** (l - 1)
        out.append(dict(level=l, shape=(cl, hl, wl),
                        split=(2 * cl, hl // 2, wl // 2)))
    return out


def validate_pyramid(levels: list[torch.Tensor], c: int, h: int, w: int):
    sched = shape_schedule(c, h, w, len(levels))
    for t, entry in zip(levels, sched):
        expect = entry["shape"]
        got = tuple(t.shape[1:])
        if got != expect:
            raise ContractViolation(
                f"pyramid level {entry['level']}: expected shape {expect}, got {got}")


def _split(x: torch.Tensor):
    half = x.shape[1] // 2
    return x[:, :half], x[:, half:]


class GlowStack(nn.Module):
    def __init__(self, channels, hidden, steps, arity, generator=None,
                 dtype=torch.float32):
        super().__init__()
        self.blocks = nn.ModuleList(
            GlowBlock(channels, hidden, arity, generator, dtype) for _ in range(steps))

    def configure_identity(self):
        for b in self.blocks:
            b.configure_identity()
        return self

    def forward(self, x, direction: str = "forward"):
        blocks = self.blocks if direction == "forward" else reversed(self.blocks)
        for b in blocks:
            x = b(x, direction)
        return x


class CIMFNet(nn.Module):
    """Algorithm wiring: per-level GLOW stacks, keep/pass bookkeeping, and the
    exact reassembly of the kept set into per-scale outputs."""

    def __init__(self, levels: int, base_channels: int, steps: int = 3,
                 hidden: int | None = None, generator: torch.Generator | None = None,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        if levels < 1:
            raise ContractViolation(f"levels must be >= 1, got {levels}")
        if base_channels % 2 != 0:
            raise ContractViolation(
                f"base channels must be even for coupling splits, got {base_channels}")
        self.levels = levels
        self.base_channels = base_channels
        stacks = []
        for l in range(1, levels + 1):
            cl = base_channels * 2 ** (l - 1)
            arity = "real" if l == 1 else "complex"
            stacks.append(GlowStack(cl, hidden or cl, steps, arity, generator, dtype))
        self.stacks = nn.ModuleList(stacks)

    def configure_identity(self):
        for s in self.stacks:
            s.configure_identity()
        return self

    def decompose(self, pyramid: list[torch.Tensor]) -> dict:
        """Run the forward wiring; returns the kept set keyed by
        (level, role)."""
        if len(pyramid) != self.levels:
            raise ContractViolation(
                f"expected {self.levels} pyramid levels, got {len(pyramid)}")
        validate_pyramid(pyramid, self.base_channels,
                         pyramid[0].shape[2], pyramid[0].shape[3])
        kept: dict = {}
        x1 = self.stacks[0](pyramid[0], "forward")
        if self.levels == 1:
            a, b = _split(pixel_unshuffle(x1, 2))
            kept[(1, "a")] = a
            kept[(1, "b")] = b
            return kept
        a, b = _split(pixel_unshuffle(x1, 2))
        kept[(1, "a")] = a
        passed = b
        for l in range(2, self.levels):
            z = self.stacks[l - 1](ComplexPair(passed, pyramid[l - 1]), "forward")
            a_re, b_re = _split(pixel_unshuffle(z.re, 2))
            a_im, b_im = _split(pixel_unshuffle(z.im, 2))
            kept[(l, "a_re")] = a_re
            kept[(l, "a_im")] = a_im
            kept[(l, "b_re")] = b_re
            passed = b_im
        z = self.stacks[self.levels - 1](
            ComplexPair(passed, pyramid[self.levels - 1]), "forward")
        kept[(self.levels, "fin_re")] = z.re
        kept[(self.levels, "fin_im")] = z.im
        return kept

    def assemble(self, kept: dict) -> list[torch.Tensor]:
        """Recompose the kept set into per-scale outputs (no block inverses).

        The real stream at each level returns to the scale that contributed
        the real half; the imaginary stream stays at its own scale.
        """
        if self.levels == 1:
            return [pixel_shuffle(torch.cat([kept[(1, "a")], kept[(1, "b")]], dim=1), 2)]
        ret = kept[(self.levels, "fin_re")]
        out: list[torch.Tensor] = [kept[(self.levels, "fin_im")]]
        for l in range(self.levels - 1, 1, -1):
            out.append(pixel_shuffle(
                torch.cat([kept[(l, "a_im")], ret], dim=1), 2))
            ret = pixel_shuffle(
                torch.cat([kept[(l, "a_re")], kept[(l, "b_re")]], dim=1), 2)
        out.append(pixel_shuffle(torch.cat([kept[(1, "a")], ret], dim=1), 2))
        return list(reversed(out))

    def forward(self, pyramid: list[torch.Tensor]) -> list[torch.Tensor]:
        return self.assemble(self.decompose(pyramid))

    def invert(self, kept: dict) -> list[torch.Tensor]:
        """Recover the original pyramid from the kept set by replaying the
        wiring backwards through the block inverses (bijectivity check)."""
        if self.levels == 1:
            x1 = pixel_shuffle(torch.cat([kept[(1, "a")], kept[(1, "b")]], dim=1), 2)
            return [self.stacks[0](x1, "inverse")]
        z = ComplexPair(kept[(self.levels, "fin_re")], kept[(self.levels, "fin_im")])
        w = self.stacks[self.levels - 1](z, "inverse")
        recovered = [w.im]
        passed = w.re
        for l in range(self.levels - 1, 1, -1):
            re = pixel_shuffle(torch.cat([kept[(l, "a_re")], kept[(l, "b_re")]], dim=1), 2)
            im = pixel_shuffle(torch.cat([kept[(l, "a_im")], passed], dim=1), 2)
            w = self.stacks[l - 1](ComplexPair(re, im), "inverse")
            recovered.append(w.im)
            passed = w.re
        x1 = pixel_shuffle(torch.cat([kept[(1, "a")], passed], dim=1), 2)
        recovered.append(self.stacks[0](x1, "inverse"))
        return list(reversed(recovered))


def cimf_forward(pyramid: list[torch.Tensor], net: CIMFNet) -> list[torch.Tensor]:
    return net(pyramid)
