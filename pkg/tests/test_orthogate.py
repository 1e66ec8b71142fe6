import pytest
import torch

from d2r.errors import ContractViolation
from d2r.manifold import is_stiefel, orthogonality_defect
from d2r.orthogate import OrthoGate


def rng(seed=0):
    return torch.Generator().manual_seed(seed)


def make_gate(c=4, seed=0, dtype=torch.float64):
    return OrthoGate(c, rng(seed), dtype=dtype)


def test_shapes_preserved():
    gate = make_gate(6)
    x = torch.randn(2, 6, 10, 14, generator=rng(1), dtype=torch.float64)
    assert gate(x).shape == x.shape


def test_zero_input_zero_output():
    # every conv is bias-free, so gating a zero map yields zero
    gate = make_gate(4)
    out = gate(torch.zeros(1, 4, 8, 8, dtype=torch.float64))
    assert torch.equal(out, torch.zeros_like(out))


def test_gates_bounded():
    gate = make_gate(4, seed=2)
    x = torch.randn(3, 4, 8, 8, generator=rng(3), dtype=torch.float64)
    e1, c_gate, gated = gate.channel_gate(x)
    assert c_gate.shape == (3, 4, 1, 1)
    assert bool((c_gate > 0).all()) and bool((c_gate < 1).all())
    # gated output is elementwise shrunk relative to the input
    assert bool((gated.abs() <= x.abs() + 1e-12).all())


def test_stiefel_params_tagged_and_orthogonal():
    gate = make_gate(5, seed=4)
    tagged = [n for n, p in gate.named_parameters() if is_stiefel(p)]
    assert sorted(tagged) == ["w_ortho_ch", "w_ortho_h", "w_ortho_w"]
    for n in tagged:
        assert orthogonality_defect(getattr(gate, n).detach()) < 1e-10


def test_depthwise_delta_init():
    # centered-delta depthwise kernels start as the identity, so e1 is just
    # the orthogonal channel mix of x
    gate = make_gate(4, seed=5)
    x = torch.randn(1, 4, 6, 6, generator=rng(6), dtype=torch.float64)
    e1, _, _ = gate.channel_gate(x)
    ref = torch.einsum("oc,nchw->nohw", gate.w_ortho_ch, x)
    assert torch.allclose(e1, ref, atol=1e-10)


def test_spatial_branch_shapes_and_axis_contract():
    gate = make_gate(4, seed=7)
    e1 = torch.randn(2, 4, 10, 6, generator=rng(8), dtype=torch.float64)
    for axis in ("height", "width"):
        assert gate.spatial_branch(e1, axis).shape == e1.shape
    with pytest.raises(ContractViolation):
        gate.spatial_branch(e1, "depth")


def test_channel_count_contract():
    gate = make_gate(4)
    with pytest.raises(ContractViolation):
        gate(torch.zeros(1, 5, 8, 8, dtype=torch.float64))


def test_height_width_branches_differ():
    # the two branches fold different axes, so a spatially anisotropic input
    # must produce different branch outputs
    gate = make_gate(4, seed=9)
    e1 = torch.zeros(1, 4, 8, 8, dtype=torch.float64)
    e1[:, :, :4, :] = 1.0
    h = gate.spatial_branch(e1, "height")
    w = gate.spatial_branch(e1, "width")
    assert not torch.allclose(h, w, atol=1e-6)
