import numpy as np
import pytest

from citris.diffcore import tensor as T
from citris.diffcore.nn import MADE, MLP, made_masks
from citris.diffcore.optim import ParamStore

from gradcheck import assert_grads_close, numeric_grad, rel_error


def leaf(rng, *shape):
    return T.Tensor(rng.standard_normal(shape), requires_grad=True)


def test_forward_values():
    assert np.isclose(T.softplus(T.constant(0.0)).item(), np.log(2.0))
    assert T.silu(T.constant(0.0)).item() == 0.0
    m = T.matmul(T.constant([[1.0, 2.0], [3.0, 4.0]]), T.constant(np.eye(2)))
    np.testing.assert_allclose(m.data, [[1.0, 2.0], [3.0, 4.0]])
    s = T.softmax_last(T.constant([0.0, 0.0, 0.0]))
    np.testing.assert_allclose(s.data, np.ones(3) / 3)


def test_backward_scalar_square():
    x = T.Tensor(3.0, requires_grad=True)
    y = T.square(x)
    y.backward()
    assert np.isclose(x.grad, 6.0)


def test_backward_tanh_at_zero():
    x = T.Tensor(np.zeros(5), requires_grad=True)
    T.tsum(T.tanh(x)).backward()
    np.testing.assert_allclose(x.grad, np.ones(5))


def test_backward_requires_scalar_root():
    x = T.Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(T.GradError):
        (x + 1.0).backward()
    with pytest.raises(T.GradError):
        T.constant(np.ones(1)).backward()


def test_nonfinite_rejected_at_op_boundary():
    x = T.Tensor(np.array([700.0]), requires_grad=True)
    with np.errstate(over="ignore"), pytest.raises(FloatingPointError):
        T.exp(T.exp(x))


UNARY_OPS = [
    T.exp, T.log, T.tanh, T.silu, T.softplus, T.sigmoid, T.square, T.sqrt,
    T.neg, T.tsum, T.sum_last, T.mean, T.mean_last, T.softmax_last,
    T.log_softmax_last,
    lambda x: T.softclamp(x, -7.0, 5.0),
    lambda x: T.slice_last(x, 1, 3),
    lambda x: T.mask_mul(x, np.array([1.0, 0.0, 1.0, 1.0])),
    lambda x: T.reshape(x, (2, 2)),
]


@pytest.mark.parametrize("op", UNARY_OPS, ids=[f"op{i}" for i in range(len(UNARY_OPS))])
def test_unary_op_gradients(op):
    rng = np.random.default_rng(0)
    # stay positive and away from kinks for log/sqrt
    x = T.Tensor(rng.uniform(0.3, 1.7, size=4), requires_grad=True)
    assert_grads_close(lambda: T.tsum(T.square(op(x))), [x])


def test_binary_op_gradients():
    rng = np.random.default_rng(1)
    for op in (T.add, T.sub, T.mul, T.div):
        a = leaf(rng, 3, 4)
        b = T.Tensor(rng.uniform(0.5, 1.5, size=(3, 4)), requires_grad=True)
        assert_grads_close(lambda: T.tsum(T.square(op(a, b))), [a, b])


def test_broadcast_bias_gradient():
    rng = np.random.default_rng(2)
    x = leaf(rng, 5, 3)
    b = leaf(rng, 3)
    assert_grads_close(lambda: T.tsum(T.square(x + b)), [x, b])


def test_matmul_gradients_and_shape_error():
    rng = np.random.default_rng(3)
    a = leaf(rng, 4, 3)
    b = leaf(rng, 3, 2)
    assert_grads_close(lambda: T.tsum(T.square(T.matmul(a, b))), [a, b])
    with pytest.raises(T.GradError):
        T.matmul(a, leaf(rng, 4, 2))


def test_concat_gradients():
    rng = np.random.default_rng(4)
    a, b = leaf(rng, 2, 3), leaf(rng, 2, 2)
    assert_grads_close(lambda: T.tsum(T.square(T.concat([a, b]))), [a, b])


def test_mlp_matches_finite_differences():
    rng = np.random.default_rng(5)
    store = ParamStore()
    mlp = MLP(store, "net", rng, [4, 8, 8, 2])
    x = T.constant(rng.standard_normal((3, 4)))
    params = list(store.params.values())

    def loss():
        return T.mean(T.square(mlp(x)))

    worst = assert_grads_close(loss, params)
    assert worst <= 1e-4


def test_mlp_with_layer_norm_gradients():
    rng = np.random.default_rng(6)
    store = ParamStore()
    mlp = MLP(store, "net", rng, [3, 16, 2], layer_norm=True)
    x = T.constant(rng.standard_normal((4, 3)))
    assert_grads_close(lambda: T.mean(T.square(mlp(x))), list(store.params.values()))


def test_detach_blocks_gradient():
    x = T.Tensor(2.0, requires_grad=True)
    y = T.square(x).detach() * x
    y.backward()
    assert np.isclose(x.grad, 4.0)  # d(c*x)/dx with c=4, not 3x^2


def test_determinism_bit_identical():
    def run():
        rng = np.random.default_rng(7)
        store = ParamStore()
        mlp = MLP(store, "net", rng, [4, 16, 1])
        x = T.constant(rng.standard_normal((8, 4)))
        out = T.mean(T.square(mlp(x)))
        out.backward()
        return out.item(), [p.grad.copy() for p in store.params.values()]

    v1, g1 = run()
    v2, g2 = run()
    assert v1 == v2
    for a, b in zip(g1, g2):
        assert np.array_equal(a, b)


def test_made_mask_ordering_upper_triangle_zero():
    rng = np.random.default_rng(8)
    store = ParamStore()
    n, cond = 5, 3
    made = MADE(store, "ar", rng, n_dims=n, cond_dim=cond, units_per_dim=16)
    z0 = rng.standard_normal(n)
    c = rng.standard_normal(cond)

    def heads(z):
        mu, ls = made(T.constant(z[None, :]), T.constant(c[None, :]))
        return mu.data[0], ls.data[0]

    h = 1e-6
    for j in range(n):
        zp, zm = z0.copy(), z0.copy()
        zp[j] += h
        zm[j] -= h
        dmu = (heads(zp)[0] - heads(zm)[0]) / (2 * h)
        dls = (heads(zp)[1] - heads(zm)[1]) / (2 * h)
        # outputs for dims <= j must not move when z_j moves
        assert np.all(np.abs(dmu[: j + 1]) < 1e-10)
        assert np.all(np.abs(dls[: j + 1]) < 1e-10)


def test_made_mask_validation():
    with pytest.raises(ValueError):
        from citris.diffcore.nn import MaskedLinear
        MaskedLinear(ParamStore(), "bad", np.random.default_rng(0), 2, 2,
                     np.array([[0.5, 0], [0, 1]]))


def test_made_depends_on_conditioning_everywhere():
    rng = np.random.default_rng(9)
    store = ParamStore()
    made = MADE(store, "ar", rng, n_dims=3, cond_dim=1, units_per_dim=8)
    z = T.constant(rng.standard_normal((1, 3)))
    c0 = made(z, T.constant([[0.0]]))[0].data
    c1 = made(z, T.constant([[1.0]]))[0].data
    assert np.all(np.abs(c1 - c0) > 0)


def test_default_made_geometry_two_layers_16_per_latent():
    rng = np.random.default_rng(10)
    store = ParamStore()
    made = MADE(store, "ar", rng, n_dims=4, cond_dim=2)
    assert len(made.hidden_layers) == 2
    assert made.hidden_layers[0].w.data.shape == (6, 64)


def test_numeric_grad_oracle_self_check():
    # the oracle itself must nail an analytic case
    x = np.array([0.3, -0.2])
    (g,) = numeric_grad(lambda: float(np.sum(x**3)), [x])
    assert rel_error(g, 3 * x**2) < 1e-8
