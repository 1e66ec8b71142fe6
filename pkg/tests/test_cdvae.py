import pytest
import torch

from d2r.cdvae import (CombineLatents, Decoder, Encoder, background_extract,
                       reparameterize)
from d2r.errors import ContractViolation
from d2r.numerics import up_dup


def rng(seed=0):
    return torch.Generator().manual_seed(seed)


def test_background_extract_matches_definition():
    g = rng(1)
    e_prev = torch.randn(1, 4, 8, 8, generator=g)
    e_cur = torch.randn(1, 8, 4, 4, generator=g)
    f = background_extract(e_prev, e_cur)
    assert torch.equal(f, e_prev - up_dup(e_cur))
    with pytest.raises(ContractViolation):
        background_extract(e_prev, torch.randn(1, 8, 2, 2, generator=g))


def test_reparameterize_modes():
    g = rng(2)
    mean = torch.randn(1, 3, 4, 4, generator=g)
    logvar = torch.randn(1, 3, 4, 4, generator=g)
    z, eps = reparameterize(mean, logvar, stochastic=False)
    assert eps is None and torch.equal(z, mean)
    z1, e1 = reparameterize(mean, logvar, rng(7), stochastic=True)
    z2, e2 = reparameterize(mean, logvar, rng(7), stochastic=True)
    assert torch.equal(z1, z2) and torch.equal(e1, e2)
    assert torch.allclose(z1, mean + torch.exp(0.5 * logvar) * e1, atol=1e-6)
    with pytest.raises(ContractViolation):
        reparameterize(mean, logvar[:, :2])


@pytest.mark.parametrize("gated", [False, True])
def test_encoder_trace_shapes(gated):
    enc = Encoder(4, 3, gated=gated, generator=rng(3))
    img = torch.rand(2, 3, 32, 32, generator=rng(4))
    tr = enc(img)
    assert [tuple(t.shape) for t in tr.e] == [
        (2, 4, 32, 32), (2, 8, 16, 16), (2, 16, 8, 8), (2, 32, 4, 4)]
    assert [tuple(t.shape) for t in tr.pyramid] == [
        (2, 4, 32, 32), (2, 8, 16, 16), (2, 16, 8, 8)]
    assert tr.mean.shape == (2, 3, 4, 4)
    assert tr.logvar.shape == (2, 3, 4, 4)
    assert bool((tr.logvar.abs() <= 20.0).all())
    # deterministic mode returns the mean as the sample
    assert torch.equal(tr.sample, tr.mean) and tr.eps is None


def test_encoder_pyramid_is_discarded_residual():
    enc = Encoder(4, 2, gated=False, generator=rng(5))
    img = torch.rand(1, 3, 16, 16, generator=rng(6))
    tr = enc(img)
    for l in range(1, 3):
        assert torch.equal(tr.pyramid[l - 1], tr.e[l - 1] - up_dup(tr.e[l]))


def test_encoder_size_contract():
    enc = Encoder(4, 3, gated=False, generator=rng(7))
    with pytest.raises(ContractViolation):
        enc(torch.rand(1, 3, 30, 32))


def test_decoder_shapes_and_range():
    dec = Decoder(4, 2)
    latent = torch.randn(2, 3, 4, 4, generator=rng(8))
    pyr = [torch.randn(2, 4, 16, 16, generator=rng(9)),
           torch.randn(2, 8, 8, 8, generator=rng(10))]
    out = dec(latent, pyr)
    assert out.shape == (2, 3, 16, 16)
    assert bool((out > 0).all()) and bool((out < 1).all())
    with pytest.raises(ContractViolation):
        dec(latent, pyr[:1])
    with pytest.raises(ContractViolation):
        dec(torch.randn(2, 4, 4, 4), pyr)


def test_decoder_skip_projections_bias_free():
    dec = Decoder(4, 2)
    for skip in dec.skips:
        assert skip.bias is None


def test_encoder_decoder_roundtrip_runs():
    enc = Encoder(4, 2, gated=False, generator=rng(11))
    dec = Decoder(4, 2)
    img = torch.rand(1, 3, 16, 16, generator=rng(12))
    tr = enc(img)
    out = dec(tr.mean, tr.pyramid)
    assert out.shape == img.shape


def test_combine_latents_starts_as_average():
    comb = CombineLatents()
    g = rng(13)
    a = torch.randn(2, 3, 4, 4, generator=g)
    b = torch.randn(2, 3, 4, 4, generator=g)
    assert torch.allclose(comb(a, b), 0.5 * (a + b), atol=1e-6)
    with pytest.raises(ContractViolation):
        comb(a, b[:1])


def test_gated_encoder_has_stiefel_params():
    from d2r.manifold import is_stiefel
    enc = Encoder(4, 2, gated=True, generator=rng(14))
    assert any(is_stiefel(p) for p in enc.parameters())
    ungated = Encoder(4, 2, gated=False, generator=rng(15))
    assert not any(is_stiefel(p) for p in ungated.parameters())
