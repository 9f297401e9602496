import math

import numpy as np
import pytest
import torch

from gasplat.scene import init_from_point_cloud
from gasplat.tokenizer import (
    GATokenizer,
    embed_euclidean,
    ga_attention,
    invariant_inner,
    token_arrays,
    tokenize_anchors,
)

import oracles


def test_embedding_layout():
    p = np.array([1.0, 2.0, 3.0])
    e = embed_euclidean(p, n_freqs=2, scale=10.0)
    f0, f1 = math.pi / 10, 2 * math.pi / 10
    expect = [math.sin(f0 * 1), math.sin(f0 * 2), math.sin(f0 * 3), math.sin(f1 * 1), math.sin(f1 * 2), math.sin(f1 * 3)]
    expect += [math.cos(f0 * 1), math.cos(f0 * 2), math.cos(f0 * 3), math.cos(f1 * 1), math.cos(f1 * 2), math.cos(f1 * 3)]
    np.testing.assert_allclose(e, expect, atol=1e-15)
    np.testing.assert_allclose(embed_euclidean(torch.tensor(p), 2).numpy(), e, atol=1e-15)
    assert embed_euclidean(np.zeros((4, 5, 3))).shape == (4, 5, 36)


def test_token_layout():
    s = init_from_point_cloud(np.random.default_rng(0).normal(size=(10, 3)), (1.0, 0.0, 0.0))
    toks = tokenize_anchors(s, [3, 1, 4])
    assert len(toks) == 5  # CLS, three anchors, TX
    assert toks[0].mv_channels[0, 0] == 1.0
    np.testing.assert_array_equal(toks[1].mv_channels[0, 1:4], s.positions[3])
    np.testing.assert_array_equal(toks[1].mv_channels[1, 1:4], s.positions[3] - [1.0, 0, 0])
    np.testing.assert_array_equal(toks[-1].mv_channels[0, 1:4], [1.0, 0, 0])
    assert toks[1].aux_scalars.tolist()[:2] == [1.0, 0.0] and toks[-1].aux_scalars.tolist()[:2] == [0.0, 1.0]
    with pytest.raises(ValueError, match="empty"):
        token_arrays(s.positions, s.tx_position, [])


def test_attention_matches_reference():
    rng = np.random.default_rng(1)
    q, k, v = rng.normal(size=(5, 3, 16)), rng.normal(size=(7, 3, 16)), rng.normal(size=(7, 3, 16))
    out, _, w = ga_attention(q, k, v)
    ref, ref_w = oracles.reference_attention(q, k, v)
    np.testing.assert_allclose(out, ref, atol=1e-12)
    np.testing.assert_allclose(w, ref_w, atol=1e-12)
    assert np.abs(w.sum(1) - 1).max() < 1e-12
    tout, _, tw = ga_attention(*(torch.tensor(x) for x in (q, k, v)))
    np.testing.assert_allclose(tout.numpy(), out, atol=1e-12)


def test_attention_single_and_identical_keys():
    rng = np.random.default_rng(2)
    q, k, v = rng.normal(size=(3, 2, 16)), rng.normal(size=(1, 2, 16)), rng.normal(size=(1, 2, 16))
    out, _, w = ga_attention(q, k, v)
    np.testing.assert_array_equal(w, np.ones((3, 1)))
    np.testing.assert_allclose(out, np.broadcast_to(v, out.shape))
    k2 = np.repeat(k, 4, 0)
    v2 = rng.normal(size=(4, 2, 16))
    out, _, w = ga_attention(q, k2, v2)
    np.testing.assert_allclose(w, 0.25)
    np.testing.assert_allclose(out, np.broadcast_to(v2.mean(0), out.shape), atol=1e-14)


def test_attention_ignores_degenerate_blades():
    rng = np.random.default_rng(3)
    q, k = rng.normal(size=(1, 1, 16)), rng.normal(size=(1, 1, 16))
    k2 = k.copy()
    k2[..., [4, 7, 9, 10, 12, 13, 14, 15]] += 5.0  # blades containing e4
    assert invariant_inner(q, k) == invariant_inner(q, k2)


def test_masking_negligible_token():
    rng = np.random.default_rng(4)
    q = rng.normal(size=(1, 2, 16))
    k = rng.normal(size=(4, 2, 16))
    k[3] = -400 * q[0]
    v = rng.normal(size=(4, 2, 16))
    full, _, w = ga_attention(q, k, v)
    assert w[0, 3] < 1e-12
    part, _, _ = ga_attention(q, k[:3], v[:3])
    assert np.abs(full - part).max() < 1e-9


def test_attention_permutation():
    rng = np.random.default_rng(5)
    q, k, v = rng.normal(size=(4, 2, 16)), rng.normal(size=(6, 2, 16)), rng.normal(size=(6, 2, 16))
    perm = rng.permutation(6)
    a, _, _ = ga_attention(q, k, v)
    b, _, _ = ga_attention(q, k[perm], v[perm])
    np.testing.assert_allclose(a, b, atol=1e-13)
    qp = rng.permutation(4)
    c, _, _ = ga_attention(q[qp], k, v)
    np.testing.assert_allclose(c, a[qp], atol=1e-13)


def test_attention_shape_errors():
    with pytest.raises(ValueError):
        ga_attention(np.zeros((2, 3, 16)), np.zeros((4, 3, 16)), np.zeros((5, 3, 16)))
    with pytest.raises(ValueError):
        ga_attention(np.zeros((2, 2, 16)), np.zeros((4, 3, 16)), np.zeros((4, 3, 16)))


def test_encoder_invariant_to_anchor_order():
    torch.manual_seed(0)
    rng = np.random.default_rng(6)
    tok = GATokenizer().double()
    pos = torch.tensor(rng.normal(size=(12, 3)))
    tx = torch.tensor(rng.normal(size=3))
    op = torch.tensor(rng.uniform(0, 1, 12))
    anchors = np.arange(8)
    with torch.no_grad():
        a = tok(pos, tx, anchors, op)
        b = tok(pos, tx, rng.permutation(anchors), op)
    np.testing.assert_allclose(a.cls.numpy(), b.cls.numpy(), atol=1e-12)
    assert a.cls.shape == (tok.cls_dim,) and a.e_x.shape == (12, tok.embed_dim)


def test_encoder_reflection_equivariance_under_both_signatures():
    from gasplat.algebra import Algebra, sandwich

    for sig in ((3, 0, 1), (3, 1, 0)):
        torch.manual_seed(1)
        alg = Algebra.get(sig)
        tok = GATokenizer(signature=sig).double()
        rng = np.random.default_rng(7)
        pos, tx = rng.normal(size=(10, 3)), rng.normal(size=3)
        F = alg.reflector(rng.normal(size=3))
        H = np.stack([sandwich(F, alg.vector(e)).coeffs[1:4] for e in np.eye(3)], axis=1)
        t = torch.tensor
        with torch.no_grad():
            a = tok(t(pos), t(tx), np.arange(6))
            b = tok(t(pos @ H.T), t(H @ tx), np.arange(6))
        expect = alg.sandwich_array(F.mv.coeffs, a.cls_mv.numpy(), odd=True)
        np.testing.assert_allclose(b.cls_mv.numpy(), expect, atol=1e-9)


def test_encode_scene():
    torch.manual_seed(2)
    s = init_from_point_cloud(np.random.default_rng(8).normal(size=(20, 3)), (0, 0, 1), n_anchors=5)
    out = GATokenizer().double().encode(s)
    assert out.broadcast(20).shape == (20, out.cls.shape[0])
    assert torch.isfinite(out.cls).all()
