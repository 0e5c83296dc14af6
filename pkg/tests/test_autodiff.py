import math

import numpy as np
import pytest

from surfdec import autodiff as ad
from surfdec.autodiff import Tensor, precision
from surfdec.optim import ParamStore, adam_step, lr_at


def _numeric_grad(fn, x, eps=1e-6):
    """Central finite differences of a scalar function of one array."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        i = it.multi_index
        xp, xm = x.copy(), x.copy()
        xp[i] += eps
        xm[i] -= eps
        g[i] = (fn(xp) - fn(xm)) / (2 * eps)
        it.iternext()
    return g


def _check_grad(build, x, rtol=1e-4):
    """build(tensor) -> scalar Tensor; compares tape grad to central FD."""
    with precision("float64"):
        t = Tensor(x, requires_grad=True)
        out = build(t)
        out.backward()
        tape = t.grad

        def f(arr):
            return build(Tensor(arr)).item()

        num = _numeric_grad(f, x.astype(np.float64))
    denom = np.maximum(np.abs(num), 1e-6)
    assert np.max(np.abs(tape - num) / denom) < rtol


RNG = np.random.default_rng(42)


def _rand(*shape):
    return RNG.standard_normal(shape)


@pytest.mark.parametrize("trial", range(5))
def test_grad_matmul(trial):
    b = _rand(4, 3)
    _check_grad(lambda t: ad.mean(ad.matmul(t, Tensor(b))), _rand(2, 4))
    a = _rand(2, 4)
    _check_grad(lambda t: ad.mean(ad.matmul(Tensor(a), t)), _rand(4, 3))


def test_grad_batched_matmul():
    b = _rand(4, 3)
    _check_grad(lambda t: ad.mean(ad.matmul(t, Tensor(b))), _rand(5, 2, 4))


@pytest.mark.parametrize("trial", range(5))
def test_grad_add_broadcast(trial):
    b = _rand(4)
    _check_grad(lambda t: ad.mean(ad.mul(ad.add(t, Tensor(b)), ad.add(t, Tensor(b)))),
                _rand(3, 4))


def test_grad_mul():
    y = _rand(3, 3)
    _check_grad(lambda t: ad.mean(ad.mul(t, Tensor(y))), _rand(3, 3))


def test_grad_product_rule_scalar():
    with precision("float64"):
        x = Tensor(np.array(2.0), requires_grad=True)
        y = Tensor(np.array(3.0), requires_grad=True)
        out = ad.mul(x, y)
        out.backward()
        assert x.grad == 3.0 and y.grad == 2.0


@pytest.mark.parametrize("op", [ad.relu, ad.sigmoid, ad.softmax])
def test_grad_elementwise_ops(op):
    for _ in range(5):
        x = _rand(3, 5) * 2 + 0.05  # keep relu away from the kink
        w = _rand(3, 5)
        _check_grad(lambda t: ad.mean(ad.mul(op(t), Tensor(w))), x)


def test_grad_layer_norm():
    gamma = _rand(6) + 1.5
    beta = _rand(6)
    for _ in range(5):
        x = _rand(4, 6)
        w = _rand(4, 6)
        _check_grad(
            lambda t: ad.mean(ad.mul(
                ad.layer_norm(t, Tensor(gamma), Tensor(beta)), Tensor(w))),
            x,
        )


def test_grad_layer_norm_affine_params():
    x = _rand(4, 6)
    w = _rand(4, 6)
    _check_grad(
        lambda t: ad.mean(ad.mul(ad.layer_norm(Tensor(x), t, Tensor(np.zeros(6))),
                                 Tensor(w))),
        _rand(6),
    )


def test_grad_reshape_transpose_concat_slice():
    _check_grad(lambda t: ad.mean(ad.reshape(t, (6,))), _rand(2, 3))
    wt = _rand(3, 2)
    _check_grad(lambda t: ad.mean(ad.mul(ad.transpose(t, (1, 0)), Tensor(wt))),
                _rand(2, 3))
    _check_grad(lambda t: ad.mean(ad.concat([t, t], axis=0)), _rand(2, 3))
    _check_grad(lambda t: ad.mean(ad.slice_(t, (slice(0, 2), slice(1, 3)))), _rand(3, 4))


def test_grad_take():
    idx = np.array([0, 2, 2, 1])
    _check_grad(lambda t: ad.mean(ad.take(t, idx)), _rand(3, 4))


def test_grad_mean_axis():
    w = _rand(3, 5)
    _check_grad(lambda t: ad.mean(ad.mul(ad.mean(t, axis=1), Tensor(w))),
                _rand(3, 4, 5))


def test_grad_weighted_bce():
    targets = RNG.integers(0, 2, (4, 5)).astype(float)
    for pw in (1.0, 3.5):
        _check_grad(lambda t: ad.weighted_bce(t, targets, pos_weight=pw), _rand(4, 5))


def test_softmax_symmetry_and_normalization():
    out = ad.softmax(Tensor(np.zeros((1, 2)))).data
    assert np.allclose(out, [[0.5, 0.5]])
    x = Tensor(_rand(10, 7) * 5)
    y = ad.softmax(x).data
    assert np.abs(y.sum(axis=-1) - 1).max() < 1e-6


def test_layer_norm_invariants():
    x = Tensor(_rand(10, 8) * 3 + 2)
    ones, zeros = Tensor(np.ones(8)), Tensor(np.zeros(8))
    y = ad.layer_norm(x, ones, zeros).data
    assert np.abs(y.mean(axis=-1)).max() < 1e-6
    assert np.abs(y.var(axis=-1) - 1).max() < 1e-4
    const = ad.layer_norm(Tensor(np.full((3, 8), 2.5)), ones, zeros).data
    assert np.abs(const).max() < 1e-3  # constant rows normalize to ~zero


def test_bce_known_values():
    # zero logits, zero targets -> ln 2
    loss = ad.weighted_bce(Tensor(np.zeros((2, 2))), np.zeros((2, 2)))
    assert abs(loss.item() - math.log(2)) < 1e-6
    # saturated correct logits -> tiny loss
    loss = ad.weighted_bce(Tensor(np.full(4, 20.0)), np.ones(4))
    assert loss.item() < 1e-8
    # pos_weight 1 equals plain bce on mixed targets
    x = _rand(6)
    t = RNG.integers(0, 2, 6).astype(float)
    s = 1 / (1 + np.exp(-x))
    ref = -(t * np.log(s) + (1 - t) * np.log(1 - s)).mean()
    assert abs(ad.weighted_bce(Tensor(x), t).item() - ref) < 1e-5


def test_bce_rejects_bad_input():
    with pytest.raises(ValueError):
        ad.weighted_bce(Tensor(np.zeros(3)), np.array([0.0, 0.5, 1.0]))
    with pytest.raises(ValueError):
        ad.weighted_bce(Tensor(np.zeros(3)), np.zeros(3), pos_weight=0.0)


def test_shape_mismatch_reported():
    with pytest.raises(ValueError) as e:
        ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))
    assert "(2, 3)" in str(e.value) and "(4, 2)" in str(e.value)


def test_forward_and_grad_determinism():
    def run():
        np.random.seed(0)
        x = Tensor(np.random.randn(8, 8), requires_grad=True)
        w = Tensor(np.random.randn(8, 8), requires_grad=True)
        out = ad.mean(ad.relu(ad.matmul(x, w)))
        out.backward()
        return out.data.copy(), x.grad.copy(), w.grad.copy()

    a, b = run(), run()
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


# -- optimizer ----------------------------------------------------------


def test_adam_first_step_is_signed_lr():
    store = ParamStore()
    p = store.add("w", np.array([1.0, -2.0]))
    p.grad = np.array([0.5, -0.25], dtype=p.data.dtype)
    adam_step(store, lr=0.01)
    # bias correction makes |delta| ~ lr on step 1
    assert np.allclose(p.data, [1.0 - 0.01, -2.0 + 0.01], atol=1e-6)


def test_adam_zero_grad_no_motion():
    store = ParamStore()
    p = store.add("w", np.array([1.0, 2.0]))
    p.grad = np.zeros(2, dtype=p.data.dtype)
    adam_step(store, lr=0.01, weight_decay=0.0)
    assert np.allclose(p.data, [1.0, 2.0])


def test_adam_decoupled_decay():
    store = ParamStore()
    p = store.add("w", np.array([1.0]))
    p.grad = np.zeros(1, dtype=p.data.dtype)
    adam_step(store, lr=0.001, weight_decay=0.0001)
    assert abs(p.data[0] - (1.0 - 1e-7)) < 1e-12


def test_lr_schedule():
    assert lr_at(100, 0.001, 100, 1000) == pytest.approx(0.001)
    assert lr_at(1000, 0.001, 100, 1000) == pytest.approx(0.0)
    assert lr_at(100 + 450, 0.001, 100, 1000) == pytest.approx(0.0005)
    assert lr_at(50, 0.001, 100, 1000) == pytest.approx(0.0005)
    with pytest.raises(ValueError):
        lr_at(1001, 0.001, 100, 1000)
    with pytest.raises(ValueError):
        lr_at(-1, 0.001, 100, 1000)
    with pytest.raises(ValueError):
        lr_at(0, 0.001, 1000, 1000)
