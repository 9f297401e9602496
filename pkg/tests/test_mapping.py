import numpy as np
import pytest
import torch

from gasplat.mapping import MLP, AttenuationNet, MappingNet, ResidualHeads, SignalNet, UnrecordedGraphError, gradients

import oracles

E, C = 36, 48


def _inputs(n=6, seed=0):
    g = torch.Generator().manual_seed(seed)
    return (
        torch.randn(E, generator=g, dtype=torch.float64),
        torch.randn(n, E, generator=g, dtype=torch.float64),
        torch.randn(C, generator=g, dtype=torch.float64),
    )


def test_zero_weights_give_half_attenuation():
    net = AttenuationNet(E, C).double()
    with torch.no_grad():
        for p in net.parameters():
            p.zero_()
    delta, f = net(*_inputs())
    np.testing.assert_array_equal(delta.detach().numpy(), 0.5)
    assert f.shape == (6, 128)


def test_attenuation_in_unit_interval():
    torch.manual_seed(0)
    net = AttenuationNet(E, C).double()
    e_tx, e_x, cls = _inputs(50)
    delta, _ = net(e_tx, e_x * 30, cls)
    assert torch.all(delta > 0) and torch.all(delta <= 1)


def test_dense_reference_forward():
    torch.manual_seed(1)
    net = SignalNet(128, E, C).double()
    f = torch.randn(4, 128, dtype=torch.float64)
    e_tx, e_x, cls = _inputs(4)
    got = net(f, e_tx, e_x, cls).detach().numpy()
    x = torch.cat([f, e_tx.expand(4, -1), e_x, cls.expand(4, -1)], -1).numpy()
    layers = [(l.weight.detach().numpy(), l.bias.detach().numpy()) for l in list(net.mlp.hidden) + [net.mlp.out]]
    np.testing.assert_allclose(got.reshape(4, -1), oracles.mlp_reference(x, layers), atol=1e-12)


def test_skip_path_degenerate_configuration():
    torch.manual_seed(2)
    net = AttenuationNet(E, C, width=16).double()
    hidden = net.mlp.hidden
    with torch.no_grad():
        hidden[0].weight.zero_()
        hidden[0].bias.zero_()
        hidden[1].weight.zero_()
        hidden[1].bias.zero_()
        hidden[2].weight[:, :16] = 0.0  # the part fed by the previous layer
    e_tx, e_x, cls = _inputs(5)
    x = net.inputs(e_tx, e_x, cls)
    w_skip, b = hidden[2].weight[:, 16:], hidden[2].bias
    h = torch.tanh(x @ w_skip.T + b)
    h = torch.tanh(hidden[3](h))
    expect = torch.sigmoid(net.mlp.out(h))[:, 0]
    torch.testing.assert_close(net(e_tx, e_x, cls)[0], expect, rtol=0, atol=1e-14)


def test_forward_is_deterministic():
    torch.manual_seed(3)
    net = MappingNet(E, C).double()
    a = net(*_inputs())
    b = net(*_inputs())
    assert torch.equal(a.delta, b.delta) and torch.equal(a.xi, b.xi)
    for k in a.residuals:
        assert torch.equal(a.residuals[k], b.residuals[k])


def test_heads_start_at_zero():
    torch.manual_seed(4)
    out = MappingNet(E, C).double()(*_inputs())
    for k, v in out.residuals.items():
        assert torch.count_nonzero(v) == 0, k
    assert out.xi.shape == (6, 9, 2)


def test_attn_residual_independent_of_signal_field():
    torch.manual_seed(5)
    heads = ResidualHeads(32).double()
    with torch.no_grad():
        heads.attn.weight.normal_()
    f = torch.randn(3, 32, dtype=torch.float64)
    xi = torch.randn(3, 9, 2, dtype=torch.float64, requires_grad=True)
    d = heads(f, xi)["d_attn"]
    (g,) = torch.autograd.grad(d.sum(), xi, allow_unused=True)
    assert g is None or torch.count_nonzero(g) == 0
    d2 = heads(f, torch.randn(3, 9, 2, dtype=torch.float64))["d_attn"]
    assert torch.equal(d, d2)


def test_gradients_helper():
    p = torch.tensor([1.0, -2.0, 3.0], dtype=torch.float64, requires_grad=True)
    unused = torch.zeros(2, dtype=torch.float64, requires_grad=True)
    g = gradients((p * p).sum(), {"p": p, "u": unused})
    torch.testing.assert_close(g["p"], 2 * p.detach())
    assert torch.count_nonzero(g["u"]) == 0
    y = p * p
    g = gradients(y.sum(), [("p", p)], grad_output=torch.tensor(0.0, dtype=torch.float64))
    assert torch.count_nonzero(g["p"]) == 0
    with pytest.raises(UnrecordedGraphError):
        gradients(torch.tensor(1.0), {"p": p})
    with pytest.raises(ValueError):
        gradients(y, {"p": p})


def test_input_dimension_checks():
    net = MappingNet(E, C).double()
    e_tx, e_x, cls = _inputs()
    with pytest.raises(ValueError, match="cls"):
        net(e_tx, e_x, cls[:-1])
    with pytest.raises(ValueError):
        MLP(3, [4], 1).features(torch.zeros(2, 5))
