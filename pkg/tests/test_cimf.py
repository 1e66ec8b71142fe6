import pytest
import torch

from d2r.cimf import CIMFNet, cimf_forward, shape_schedule, validate_pyramid
from d2r.errors import ContractViolation


def rng(seed=0):
    return torch.Generator().manual_seed(seed)


def make_pyramid(c, h, w, levels, seed, dtype=torch.float64):
    g = rng(seed)
    return [torch.randn(2, c * 2 ** l, h // 2 ** l, w // 2 ** l,
                        generator=g, dtype=dtype) for l in range(levels)]


def randomize(net, seed, scale=0.1):
    g = rng(seed)
    with torch.no_grad():
        for stack in net.stacks:
            for block in stack.blocks:
                block.coupling.head_re.normal_(0, scale, generator=g)
                if block.arity == "complex":
                    block.coupling.head_im.normal_(0, scale, generator=g)
    return net


def test_shape_schedule():
    sched = shape_schedule(4, 32, 32, 3)
    assert [s["shape"] for s in sched] == [(4, 32, 32), (8, 16, 16), (16, 8, 8)]
    assert sched[0]["split"] == (8, 16, 16)
    with pytest.raises(ContractViolation):
        shape_schedule(4, 30, 32, 3)


def test_validate_pyramid_rejects_bad_level():
    pyr = make_pyramid(4, 16, 16, 2, 0)
    validate_pyramid(pyr, 4, 16, 16)
    pyr[1] = torch.zeros(2, 9, 8, 8, dtype=torch.float64)
    with pytest.raises(ContractViolation):
        validate_pyramid(pyr, 4, 16, 16)


@pytest.mark.parametrize("levels", [1, 2, 3])
def test_forward_preserves_shapes(levels):
    net = randomize(CIMFNet(levels, 4, steps=2, hidden=8, generator=rng(1),
                            dtype=torch.float64), 2)
    pyr = make_pyramid(4, 32, 32, levels, 3)
    out = net(pyr)
    assert len(out) == levels
    for a, b in zip(out, pyr):
        assert a.shape == b.shape


@pytest.mark.parametrize("levels", [1, 2, 3])
def test_identity_configuration_is_identity(levels):
    net = randomize(CIMFNet(levels, 4, steps=2, hidden=8, generator=rng(4),
                            dtype=torch.float64), 5)
    net.configure_identity()
    pyr = make_pyramid(4, 32, 32, levels, 6)
    out = cimf_forward(pyr, net)
    for a, b in zip(out, pyr):
        assert torch.equal(a, b)


@pytest.mark.parametrize("levels", [1, 2, 3, 4])
def test_kept_set_replay_recovers_pyramid(levels):
    # gentle coupling heads: composed exponential scales amplify roundoff,
    # so the bound here is about conditioning, not about the algebra
    net = randomize(CIMFNet(levels, 4, steps=2, hidden=8, generator=rng(7),
                            dtype=torch.float64), 8, scale=0.02)
    pyr = make_pyramid(4, 64, 64, levels, 9)
    with torch.no_grad():
        kept = net.decompose(pyr)
        back = net.invert(kept)
    for a, b in zip(back, pyr):
        assert float((a - b).norm() / b.norm()) < 1e-9


def test_kept_set_channel_bookkeeping():
    # kept tensors must jointly hold exactly the pyramid's element count
    net = CIMFNet(3, 4, steps=1, hidden=8, generator=rng(10), dtype=torch.float64)
    pyr = make_pyramid(4, 32, 32, 3, 11)
    kept = net.decompose(pyr)
    n_in = sum(t.numel() for t in pyr)
    n_kept = sum(t.numel() for t in kept.values())
    assert n_in == n_kept
    assert set(kept) == {(1, "a"), (2, "a_re"), (2, "a_im"), (2, "b_re"),
                         (3, "fin_re"), (3, "fin_im")}


def test_wrong_level_count_rejected():
    net = CIMFNet(3, 4, generator=rng(12))
    with pytest.raises(ContractViolation):
        net(make_pyramid(4, 32, 32, 2, 13, dtype=torch.float32))


def test_constructor_contracts():
    with pytest.raises(ContractViolation):
        CIMFNet(0, 4)
    with pytest.raises(ContractViolation):
        CIMFNet(2, 3)


def test_gradients_reach_all_levels():
    net = randomize(CIMFNet(3, 4, steps=1, hidden=8, generator=rng(14),
                            dtype=torch.float64), 15)
    pyr = [t.requires_grad_(True) for t in make_pyramid(4, 32, 32, 3, 16)]
    out = net(pyr)
    sum(o.sum() for o in out).backward()
    for t in pyr:
        assert t.grad is not None
        assert float(t.grad.abs().sum()) > 0
