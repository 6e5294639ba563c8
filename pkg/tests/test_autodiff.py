"""Engine-level gradient checks: every op against central finite differences."""

import numpy as np
import pytest

from bicross import autodiff as ad
from bicross.autodiff import Tensor
from bicross.evalkit import gradcheck

RNG = np.random.default_rng(0)


def check(probe, params, tol=1e-6, seed=0):
    err = gradcheck(probe, params, seed=seed)
    assert err < tol, f"max relative error {err:.3e}"


def test_arithmetic_chain():
    a = Tensor(RNG.normal(size=(3, 4)), requires_grad=True)
    b = Tensor(RNG.normal(size=(3, 4)) + 3.0, requires_grad=True)

    def probe():
        return ad.sum_((a * b + a / b - 2.0 * a) ** 2.0)

    check(probe, {"a": a, "b": b})


def test_broadcasting_gradients():
    a = Tensor(RNG.normal(size=(4, 1)), requires_grad=True)
    b = Tensor(RNG.normal(size=(1, 5)), requires_grad=True)
    bias = Tensor(RNG.normal(size=(5,)), requires_grad=True)

    def probe():
        return ad.sum_((a + b * 0.5 + bias) ** 2.0)

    check(probe, {"a": a, "b": b, "bias": bias})


def test_matmul():
    a = Tensor(RNG.normal(size=(3, 4)), requires_grad=True)
    b = Tensor(RNG.normal(size=(4, 2)), requires_grad=True)
    w = RNG.normal(size=(3, 2))

    def probe():
        return ad.sum_(ad.matmul(a, b) * w)

    check(probe, {"a": a, "b": b})


@pytest.mark.parametrize(
    "fn,shift",
    [
        (ad.exp, 0.0),
        (ad.log, 3.0),
        (ad.sqrt, 3.0),
        (ad.sigmoid, 0.0),
        (ad.softplus, 0.0),
        (ad.silu, 0.0),
    ],
)
def test_elementwise(fn, shift):
    x = Tensor(RNG.normal(size=(4, 4)) + shift, requires_grad=True)
    w = RNG.normal(size=(4, 4))

    def probe():
        return ad.sum_(fn(x) * w)

    check(probe, {"x": x})


def test_abs_away_from_kink():
    x = Tensor(RNG.choice([-1.0, 1.0], size=(4, 4)) * RNG.uniform(0.5, 2.0, size=(4, 4)), requires_grad=True)
    check(lambda: ad.sum_(ad.abs_(x) ** 2.0), {"x": x})


def test_clip_passes_gradient_inside_only():
    x = Tensor(np.array([-2.0, 0.5, 2.0]), requires_grad=True)
    y = ad.sum_(ad.clip(x, -1.0, 1.0) * np.array([1.0, 1.0, 1.0]))
    y.backward()
    assert x.grad.tolist() == [0.0, 1.0, 0.0]


def test_where_routes_both_branches():
    cond = np.array([True, False, True, False])
    a = Tensor(RNG.normal(size=4), requires_grad=True)
    b = Tensor(RNG.normal(size=4), requires_grad=True)

    def probe():
        return ad.sum_(ad.where(cond, a * 2.0, b * 3.0) ** 2.0)

    check(probe, {"a": a, "b": b})


def test_reductions_and_shapes():
    x = Tensor(RNG.normal(size=(2, 3, 4)), requires_grad=True)

    def probe():
        y = ad.mean(x, axis=(1, 2))  # (2,)
        z = ad.sum_(ad.reshape(x, (6, 4)), axis=0)  # (4,)
        t = ad.transpose(x, (2, 0, 1))
        return ad.sum_(y * y) + ad.sum_(z * 0.1) + ad.sum_(t * 0.01)

    check(probe, {"x": x})


def test_getitem_and_concat():
    x = Tensor(RNG.normal(size=(5, 4)), requires_grad=True)
    y = Tensor(RNG.normal(size=(3, 4)), requires_grad=True)
    mask = RNG.random((5, 4)) < 0.5

    def probe():
        joined = ad.concat([x[1:4], y], axis=0)
        picked = x[mask]
        diag = x[np.arange(4), np.arange(4)]
        return ad.sum_(joined**2.0) + ad.sum_(picked) * 0.5 + ad.sum_(diag**2.0)

    check(probe, {"x": x, "y": y})


def test_softmax_gradient():
    x = Tensor(RNG.normal(size=(3, 5)), requires_grad=True)
    w = RNG.normal(size=(3, 5))

    def probe():
        return ad.sum_(ad.softmax(x, axis=1) * w)

    check(probe, {"x": x})


def test_softmax_rows_sum_to_one():
    x = Tensor(RNG.normal(size=(6, 7)) * 10.0)
    s = ad.softmax(x, axis=1)
    np.testing.assert_allclose(s.data.sum(axis=1), 1.0, atol=1e-12)


@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1)])
def test_conv2d(stride, pad):
    x = Tensor(RNG.normal(size=(2, 3, 6, 6)), requires_grad=True)
    w = Tensor(RNG.normal(size=(4, 3, 3, 3)) * 0.3, requires_grad=True)
    b = Tensor(RNG.normal(size=4), requires_grad=True)

    def probe():
        return ad.sum_(ad.conv2d(x, w, b, stride=stride, pad=pad) ** 2.0)

    check(probe, {"x": x, "w": w, "b": b})


def test_conv2d_matches_direct_computation():
    x = RNG.normal(size=(1, 2, 4, 4))
    w = RNG.normal(size=(3, 2, 3, 3))
    b = RNG.normal(size=3)
    out = ad.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=1, pad=1).data
    # direct sliding-window oracle
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    expected = np.zeros((1, 3, 4, 4))
    for o in range(3):
        for i in range(4):
            for j in range(4):
                expected[0, o, i, j] = np.sum(xp[0, :, i : i + 3, j : j + 3] * w[o]) + b[o]
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_upsample2x():
    x = Tensor(RNG.normal(size=(1, 2, 3, 3)), requires_grad=True)
    w = RNG.normal(size=(1, 2, 6, 6))

    def probe():
        return ad.sum_(ad.upsample2x(x) * w)

    check(probe, {"x": x})
    up = ad.upsample2x(Tensor(np.arange(4.0).reshape(1, 1, 2, 2))).data
    np.testing.assert_array_equal(
        up[0, 0], [[0, 0, 1, 1], [0, 0, 1, 1], [2, 2, 3, 3], [2, 2, 3, 3]]
    )


def test_grad_reverse_contract():
    x = Tensor(RNG.normal(size=(3,)), requires_grad=True)
    w = np.array([1.0, 2.0, 3.0])

    plain = ad.sum_(x * w)
    plain.backward()
    g_plain = x.grad.copy()

    x.grad = None
    reversed_loss = ad.sum_(ad.grad_reverse(x, 1.5) * w)
    reversed_loss.backward()
    np.testing.assert_allclose(x.grad, -1.5 * g_plain, atol=1e-15)
    np.testing.assert_allclose(reversed_loss.data, plain.data, atol=1e-15)


def test_no_grad_graph_is_pruned():
    x = Tensor(RNG.normal(size=(3, 3)))  # requires_grad=False
    y = ad.silu(x * 2.0 + 1.0)
    assert not y.requires_grad
    assert y._parents == ()


def test_detach_blocks_gradient():
    x = Tensor(RNG.normal(size=(3,)), requires_grad=True)
    y = ad.sum_(x.detach() * x)
    y.backward()
    np.testing.assert_allclose(x.grad, x.data)  # only the non-detached factor contributes


def test_repeated_use_accumulates():
    x = Tensor(np.array([2.0]), requires_grad=True)
    y = x * x + x * 3.0  # dy/dx = 2x + 3 = 7
    ad.sum_(y).backward()
    assert x.grad[0] == pytest.approx(7.0)
