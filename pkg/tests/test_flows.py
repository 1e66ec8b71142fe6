import pytest
import torch

from d2r.errors import ContractViolation, InitializationOrderError
from d2r.flows import (ActNorm, AffineCoupling, GlowBlock, Invertible1x1Complex,
                       Invertible1x1Real, glow_apply, polar_factor_newton)
from d2r.manifold import polar_unitary
from d2r.numerics import ComplexPair


def rng(seed=0):
    return torch.Generator().manual_seed(seed)


def rand_pair(shape, seed, dtype=torch.float64):
    g = rng(seed)
    return ComplexPair(torch.randn(shape, generator=g, dtype=dtype),
                       torch.randn(shape, generator=g, dtype=dtype))


def randomized_block(channels, hidden, arity, seed, dtype=torch.float64):
    block = GlowBlock(channels, hidden, arity, rng(seed), dtype)
    with torch.no_grad():
        block.coupling.head_re.normal_(0, 0.1, generator=rng(seed + 1))
        if arity == "complex":
            block.coupling.head_im.normal_(0, 0.1, generator=rng(seed + 2))
    return block


def test_polar_newton_matches_svd_oracle():
    g = rng(1)
    for k in range(20):
        wr = torch.randn(6, 6, generator=g, dtype=torch.float64)
        wi = torch.randn(6, 6, generator=g, dtype=torch.float64)
        nr, ni = polar_factor_newton(wr, wi)
        sr, si = polar_unitary(wr, wi)
        assert torch.allclose(nr, sr, atol=1e-10)
        assert torch.allclose(ni, si, atol=1e-10)


def test_actnorm_normalizes_first_batch():
    an = ActNorm(3, "real", torch.float64)
    g = rng(2)
    x = torch.randn(16, 3, 8, 8, generator=g, dtype=torch.float64) * 2.5 + 1.0
    y = an(x)
    assert bool(an.initialized)
    assert torch.allclose(y.mean(dim=(0, 2, 3)), torch.zeros(3, dtype=torch.float64), atol=1e-8)
    assert torch.allclose(y.std(dim=(0, 2, 3), unbiased=False),
                          torch.ones(3, dtype=torch.float64), atol=1e-8)
    # statistics are frozen: a second, different batch is not re-normalized
    x2 = torch.randn(16, 3, 8, 8, generator=g, dtype=torch.float64) * 7.0
    y2 = an(x2)
    assert float(y2.detach().std()) != pytest.approx(1.0, abs=0.1)


def test_actnorm_inverse_before_init_raises():
    an = ActNorm(3, "real")
    with pytest.raises(InitializationOrderError):
        an(torch.zeros(1, 3, 4, 4), "inverse")


def test_actnorm_roundtrip_both_arities():
    an = ActNorm(4, "real", torch.float64)
    x = torch.randn(2, 4, 6, 6, generator=rng(3), dtype=torch.float64)
    an(x)
    assert torch.allclose(an(an(x), "inverse"), x, atol=1e-12)

    anc = ActNorm(4, "complex", torch.float64)
    z = rand_pair((2, 4, 6, 6), 4)
    anc(z)
    back = anc(anc(z), "inverse")
    assert torch.allclose(back.re, z.re, atol=1e-12)
    assert torch.allclose(back.im, z.im, atol=1e-12)
    with pytest.raises(ContractViolation):
        anc(x)
    with pytest.raises(ContractViolation):
        an(z)


def test_invertible_1x1_real_inverse_is_transpose():
    layer = Invertible1x1Real(6, rng(5), torch.float64)
    x = torch.randn(2, 6, 5, 5, generator=rng(6), dtype=torch.float64)
    assert torch.allclose(layer(layer(x), "inverse"), x, atol=1e-12)


def test_invertible_1x1_complex_unitary_kernel():
    layer = Invertible1x1Complex(4, rng(7), torch.float64)
    ur, ui = layer.kernel()
    u = torch.complex(ur, ui)
    eye = torch.eye(4, dtype=torch.complex128)
    assert (u.conj().T @ u - eye).norm() < 1e-12
    z = rand_pair((2, 4, 5, 5), 8)
    back = layer(layer(z), "inverse")
    assert torch.allclose(back.re, z.re, atol=1e-12)
    assert torch.allclose(back.im, z.im, atol=1e-12)


def test_coupling_identity_at_init():
    # zero-initialized heads: gamma = 1, beta = 0
    coup = AffineCoupling(4, 8, "real", rng(9), torch.float64)
    x = torch.randn(1, 4, 6, 6, generator=rng(10), dtype=torch.float64)
    assert torch.allclose(coup(x), x, atol=1e-12)
    coupc = AffineCoupling(4, 8, "complex", rng(11), torch.float64)
    z = rand_pair((1, 4, 6, 6), 12)
    out = coupc(z)
    assert torch.allclose(out.re, z.re, atol=1e-12)
    assert torch.allclose(out.im, z.im, atol=1e-12)


def test_coupling_odd_channels_rejected():
    with pytest.raises(ContractViolation):
        AffineCoupling(5, 8, "real")


def test_glow_block_roundtrip():
    for arity in ("real", "complex"):
        block = randomized_block(4, 8, arity, 13)
        if arity == "complex":
            z = rand_pair((2, 4, 8, 8), 14)
            back = block(block(z), "inverse")
            assert torch.allclose(back.re, z.re, atol=1e-10)
            assert torch.allclose(back.im, z.im, atol=1e-10)
        else:
            x = torch.randn(2, 4, 8, 8, generator=rng(15), dtype=torch.float64)
            assert torch.allclose(block(block(x), "inverse"), x, atol=1e-10)


def test_glow_block_identity_configuration():
    block = randomized_block(4, 8, "real", 16).configure_identity()
    x = torch.randn(2, 4, 8, 8, generator=rng(17), dtype=torch.float64)
    assert torch.allclose(block(x), x, atol=1e-12)


def test_glow_apply_direction_contract():
    block = GlowBlock(4, 8, "real", rng(18), torch.float64)
    x = torch.randn(1, 4, 4, 4, generator=rng(19), dtype=torch.float64)
    glow_apply(x, block)
    with pytest.raises(ContractViolation):
        glow_apply(x, block, "sideways")
