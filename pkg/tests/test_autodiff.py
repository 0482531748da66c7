import numpy as np
import pytest

from ulcast.autodiff import (AdamState, Graph, GraphError, NumericError,
                             ShapeError, Tensor, adam_step, gradient_check)


def test_matmul_bias_identity():
    g = Graph()
    out = g.matmul_bias(Tensor([[1.0, 2.0]]), Tensor(np.eye(2)), Tensor([0.0, 0.0]))
    assert out.data.tolist() == [[1.0, 2.0]]


def test_matmul_bias_hand_values():
    g = Graph()
    out = g.matmul_bias(Tensor([[1.0, 2.0], [3.0, 4.0]]),
                        Tensor([[1.0, 0.0], [1.0, 1.0]]),
                        Tensor([1.0, 1.0]))
    assert out.data.tolist() == [[4.0, 3.0], [8.0, 5.0]]


def test_matmul_bias_shape_mismatch_names_both_shapes():
    g = Graph()
    with pytest.raises(ShapeError) as exc:
        g.matmul_bias(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))), Tensor(np.zeros(3)))
    assert "(2, 3)" in str(exc.value)


def test_conv1d_identity_kernel():
    g = Graph()
    out = g.conv1d(Tensor(np.ones((1, 1, 5))), Tensor([[[0.0, 1.0, 0.0]]]), padding=1)
    assert out.data.tolist() == [[[1.0, 1.0, 1.0, 1.0, 1.0]]]


def test_conv1d_box_kernel_with_zero_pads():
    g = Graph()
    out = g.conv1d(Tensor(np.ones((1, 1, 5))), Tensor([[[1.0, 1.0, 1.0]]]), padding=1)
    assert out.data.tolist() == [[[2.0, 3.0, 3.0, 3.0, 2.0]]]


def test_conv1d_too_short_input_rejected():
    g = Graph()
    with pytest.raises(ShapeError):
        g.conv1d(Tensor(np.ones((1, 1, 2))), Tensor(np.ones((1, 1, 5))), padding=0)


def test_conv1d_even_kernel_rejected():
    g = Graph()
    with pytest.raises(ShapeError):
        g.conv1d(Tensor(np.ones((1, 1, 5))), Tensor(np.ones((1, 1, 4))), padding=1)


def test_relu_values():
    g = Graph()
    out = g.relu(Tensor([-1.0, 0.0, 2.0]))
    assert out.data.tolist() == [0.0, 0.0, 2.0]


def test_sigmoid_at_zero():
    g = Graph()
    assert g.sigmoid(Tensor([0.0])).data[0] == 0.5


def test_gelu_limits():
    g = Graph()
    assert g.gelu(Tensor([0.0])).data[0] == 0.0
    big = g.gelu(Tensor([20.0])).data[0]
    assert abs(big - 20.0) < 1e-9
    small = g.gelu(Tensor([-20.0])).data[0]
    assert abs(small) < 1e-9


def test_activation_dispatch_rejects_unknown():
    g = Graph()
    with pytest.raises(ValueError):
        g.activation(Tensor([1.0]), "swish")


def test_attention_t1_returns_v():
    g = Graph()
    rng = np.random.default_rng(0)
    q = Tensor(rng.normal(size=(2, 3, 1, 4)))
    k = Tensor(rng.normal(size=(2, 3, 1, 4)))
    v = Tensor(rng.normal(size=(2, 3, 1, 4)))
    out = g.softmax_attention(q, k, v)
    np.testing.assert_array_equal(out.data, v.data)


def test_attention_rows_sum_to_one():
    # softmax normalization observed through a probe: attention applied to
    # all-ones values returns exactly the row sums of the weights
    rng = np.random.default_rng(1)
    for _ in range(5):
        g = Graph()
        q = Tensor(rng.normal(size=(1, 2, 6, 3)))
        k = Tensor(rng.normal(size=(1, 2, 6, 3)))
        ones = Tensor(np.ones((1, 2, 6, 3)))
        out = g.softmax_attention(q, k, ones)
        np.testing.assert_allclose(out.data, 1.0, atol=1e-12)


def test_attention_sharp_softmax_selects_rows():
    # orthogonal q=k at a large scale makes the weights one-hot
    g = Graph()
    base = np.eye(4)[None, None, :, :] * 50.0
    v = np.arange(16, dtype=float).reshape(1, 1, 4, 4)
    out = g.softmax_attention(Tensor(base), Tensor(base), Tensor(v))
    np.testing.assert_allclose(out.data, v, atol=1e-9)


def test_attention_shape_mismatch():
    g = Graph()
    with pytest.raises(ShapeError):
        g.softmax_attention(Tensor(np.zeros((1, 1, 2, 3))),
                            Tensor(np.zeros((1, 1, 2, 3))),
                            Tensor(np.zeros((1, 1, 3, 3))))


def test_mse_examples():
    g = Graph()
    assert g.mse_loss(Tensor([1.0, 2.0]), Tensor([1.0, 2.0])).item() == 0.0
    assert g.mse_loss(Tensor([0.0, 0.0]), Tensor([3.0, 4.0])).item() == 12.5
    assert g.mse_loss(Tensor([2.0]), Tensor([5.0])).item() == 9.0
    with pytest.raises(ShapeError):
        g.mse_loss(Tensor([1.0]), Tensor([1.0, 2.0]))


def test_backward_sum_gives_ones():
    g = Graph()
    x = Tensor(np.arange(4.0), requires_grad=True)
    g.backward(g.sum_all(x))
    np.testing.assert_array_equal(x.grad, np.ones(4))


def test_backward_linear_model_matches_closed_form():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(6, 3))
    y = rng.normal(size=6)
    w = Tensor(rng.normal(size=(3, 1)), requires_grad=True)
    g = Graph()
    pred = g.reshape(g.matmul(Tensor(x), w), (6,))
    g.backward(g.mse_loss(pred, Tensor(y)))
    residual = x @ w.data.reshape(-1) - y
    expected = 2.0 * x.T @ residual / 6.0
    np.testing.assert_allclose(w.grad.reshape(-1), expected, rtol=1e-12)


def test_backward_disconnected_grad_stays_zero():
    g = Graph()
    x = Tensor([1.0, 2.0], requires_grad=True)
    other = Tensor([5.0], requires_grad=True)
    g.backward(g.sum_all(x))
    np.testing.assert_array_equal(other.grad, [0.0])


def test_backward_twice_rejected():
    g = Graph()
    x = Tensor([1.0], requires_grad=True)
    loss = g.sum_all(x)
    g.backward(loss)
    with pytest.raises(GraphError):
        g.backward(loss)


def test_backward_nonscalar_loss_rejected():
    g = Graph()
    x = Tensor([1.0, 2.0], requires_grad=True)
    out = g.relu(x)
    with pytest.raises(GraphError):
        g.backward(out)


def test_backward_foreign_loss_rejected():
    g = Graph()
    with pytest.raises(GraphError):
        g.backward(Tensor(3.0))


def test_nan_input_rejected():
    with pytest.raises(NumericError):
        Tensor([1.0, float("nan")])


def test_ops_do_not_mutate_inputs():
    rng = np.random.default_rng(3)
    x = Tensor(rng.normal(size=(2, 1, 5)), requires_grad=True)
    k = Tensor(rng.normal(size=(3, 1, 3)), requires_grad=True)
    x_before, k_before = x.data.copy(), k.data.copy()
    g = Graph()
    out = g.conv1d(x, k, padding=1)
    g.backward(g.sum_all(g.tanh(out)))
    np.testing.assert_array_equal(x.data, x_before)
    np.testing.assert_array_equal(k.data, k_before)


# -- finite-difference checks, one per registered op ---------------------------

N_SEEDS = 20
TOL = 1e-4


def _rand(rng, shape, away_from_zero=False):
    a = rng.normal(size=shape)
    if away_from_zero:
        a = np.where(np.abs(a) < 0.1, a + 0.2 * np.sign(a + 1e-12), a)
    return a


@pytest.mark.parametrize("seed", range(N_SEEDS))
def test_gradcheck_every_op(seed):
    rng = np.random.default_rng(seed)
    b, f = int(rng.integers(1, 4)), int(rng.integers(2, 5))

    w = Tensor(_rand(rng, (f, 3)), requires_grad=True)
    bias = Tensor(_rand(rng, 3), requires_grad=True)
    w_out = Tensor(_rand(rng, (3, 1)))
    x_const = Tensor(_rand(rng, (b, f)))
    y_const = Tensor(_rand(rng, b))

    def dense(g):
        h = g.sigmoid(g.matmul_bias(x_const, w, bias))
        return g.mse_loss(g.reshape(g.matmul(h, w_out), (b,)), y_const)

    assert gradient_check(dense, [w, bias], epsilon=1e-5) < TOL

    k = Tensor(_rand(rng, (2, 1, 3)), requires_grad=True)
    xc = Tensor(_rand(rng, (b, 1, 5)))

    def conv(g):
        out = g.conv1d(xc, k, padding=1)
        return g.sum_all(g.tanh(out))

    assert gradient_check(conv, [k], epsilon=1e-5) < TOL

    act_in = Tensor(_rand(rng, (b, 4), away_from_zero=True), requires_grad=True)
    for kind in ("sigmoid", "tanh", "relu", "gelu"):
        def act(g, kind=kind):
            return g.sum_all(g.mul(g.activation(act_in, kind), act_in))
        assert gradient_check(act, [act_in], epsilon=1e-5) < TOL

    q = Tensor(_rand(rng, (1, 2, 3, 2)), requires_grad=True)
    kk = Tensor(_rand(rng, (1, 2, 3, 2)), requires_grad=True)
    v = Tensor(_rand(rng, (1, 2, 3, 2)), requires_grad=True)

    def attn(g):
        out = g.softmax_attention(q, kk, v)
        return g.sum_all(g.tanh(out))

    assert gradient_check(attn, [q, kk, v], epsilon=1e-5) < TOL

    gamma = Tensor(_rand(rng, 4), requires_grad=True)
    beta = Tensor(_rand(rng, 4), requires_grad=True)
    ln_in = Tensor(_rand(rng, (b, 4)), requires_grad=True)

    def ln(g):
        return g.sum_all(g.sigmoid(g.layer_norm(ln_in, gamma, beta)))

    assert gradient_check(ln, [ln_in, gamma, beta], epsilon=1e-5) < TOL

    s = Tensor(_rand(rng, (b, 3, 2)), requires_grad=True)

    def structural(g):
        out = g.transpose(g.reshape(s, (b, 6, 1)), (1, 0, 2))
        out = g.slice_axis(out, 0, 1, 5)
        out = g.mean_axis(out, 0)
        return g.sum_all(g.mul(out, out))

    assert gradient_check(structural, [s], epsilon=1e-5) < TOL


def test_gradient_check_simple_square_is_tight():
    x = Tensor([3.0], requires_grad=True)

    def square(g):
        return g.sum_all(g.mul(x, x))

    assert gradient_check(square, [x], epsilon=1e-5) < 1e-8


def test_gradient_check_epsilon_domain():
    x = Tensor([1.0], requires_grad=True)
    with pytest.raises(ValueError):
        gradient_check(lambda g: g.sum_all(x), [x], epsilon=1e-2)


# -- Adam ----------------------------------------------------------------------


def test_adam_zero_grad_leaves_params_unchanged():
    p = Tensor([1.0, -2.0], requires_grad=True)
    state = AdamState.for_params([p])
    adam_step([p], state)
    assert p.data.tolist() == [1.0, -2.0]
    assert state.step_count == 1


def test_adam_first_step_moves_by_lr():
    p = Tensor([0.5], requires_grad=True)
    p.grad[...] = 1.0
    state = AdamState.for_params([p], lr=1e-3)
    adam_step([p], state)
    assert abs((0.5 - p.data[0]) - 1e-3) < 1e-9


def test_adam_missing_grad_rejected():
    p = Tensor([0.5])  # requires_grad False -> no grad buffer
    state = AdamState(m=[np.zeros(1)], v=[np.zeros(1)])
    with pytest.raises(GraphError):
        adam_step([p], state)


def test_adam_runs_are_bit_identical():
    def run():
        rng = np.random.default_rng(11)
        p = Tensor(rng.normal(size=4), requires_grad=True)
        state = AdamState.for_params([p])
        for _ in range(25):
            p.zero_grad()
            g = Graph()
            loss = g.mse_loss(g.relu(p), Tensor(rng.normal(size=4)))
            g.backward(loss)
            adam_step([p], state)
        return p.data.copy()

    a, b = run(), run()
    np.testing.assert_array_equal(a, b)


def test_adam_converges_on_quadratic():
    target = np.array([1.5, -0.5, 2.0])
    p = Tensor(np.zeros(3), requires_grad=True)
    state = AdamState.for_params([p], lr=0.05)
    for _ in range(500):
        p.zero_grad()
        g = Graph()
        loss = g.mse_loss(p, Tensor(target))
        g.backward(loss)
        adam_step([p], state)
    np.testing.assert_allclose(p.data, target, atol=1e-3)


def test_adam_state_validation():
    p = Tensor([1.0], requires_grad=True)
    with pytest.raises(ValueError):
        AdamState.for_params([p], beta1=1.0)
    with pytest.raises(ValueError):
        AdamState.for_params([p], epsilon=0.0)
