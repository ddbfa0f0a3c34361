import numpy as np
import pytest

from src.autodiff import (
    Tape,
    Tensor,
    add,
    backward,
    concat,
    conv1d,
    elementwise,
    embedding_lookup,
    grad_check,
    layer_norm,
    matmul,
    maxpool1d,
    mean,
    mul,
    reduce,
    reshape,
    scale,
    sigmoid,
    softmax,
    std,
    sum_,
    take,
    transpose,
)
from src.autodiff.module import Module, constant_init, orthonormal_init, uniform_init
from src.autodiff.tensor import set_debug
from src.errors import ConfigError, NumericError, ShapeError


def param(data):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)


# elementwise ---------------------------------------------------------------

def test_sigmoid_at_zero_is_half():
    assert sigmoid(Tensor(0.0)).item() == 0.5


def test_sigmoid_stays_inside_open_interval():
    out = sigmoid(Tensor([-1000.0, 1000.0])).data
    assert 0.0 < out[0] < 1.0
    assert 0.0 < out[1] < 1.0


def test_add_vectors():
    np.testing.assert_array_equal(add(Tensor([1.0, 2.0]), Tensor([3.0, 4.0])).data, [4.0, 6.0])


def test_mul_by_scalar_and_gradient():
    x = param([1.0, 2.0, 3.0])
    with Tape() as tape:
        y = mul(x, 2.0)
        tape.backward(sum_(y))
    np.testing.assert_array_equal(y.data, [2.0, 4.0, 6.0])
    np.testing.assert_array_equal(x.grad, [2.0, 2.0, 2.0])


def test_elementwise_dispatch():
    a, b = Tensor([4.0, 9.0]), Tensor([2.0, 3.0])
    np.testing.assert_array_equal(elementwise("sub", a, b).data, [2.0, 6.0])
    np.testing.assert_array_equal(elementwise("div", a, b).data, [2.0, 3.0])
    np.testing.assert_array_equal(elementwise("scale", a, 0.5).data, [2.0, 4.5])
    with pytest.raises(ValueError):
        elementwise("pow", a, b)


def test_non_broadcastable_shapes_raise():
    with pytest.raises(ShapeError):
        add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4,))))


def test_div_by_zero_raises_in_debug_mode():
    set_debug(True)
    try:
        with pytest.raises(NumericError):
            elementwise("div", Tensor([1.0]), Tensor([0.0]))
    finally:
        set_debug(False)


def test_broadcast_matches_explicit_tiling_bitwise(rng):
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4,))
    tiled = np.tile(b, (3, 1))
    np.testing.assert_array_equal(add(Tensor(a), Tensor(b)).data, add(Tensor(a), Tensor(tiled)).data)
    np.testing.assert_array_equal(mul(Tensor(a), Tensor(b)).data, mul(Tensor(a), Tensor(tiled)).data)


def test_broadcast_gradient_reduces_to_operand_shape(rng):
    a = param(rng.normal(size=(3, 4)))
    b = param(rng.normal(size=(4,)))
    with Tape() as tape:
        tape.backward(sum_(mul(a, b)))
    np.testing.assert_allclose(b.grad, a.data.sum(axis=0))
    assert a.grad.shape == (3, 4)


# matmul ------------------------------------------------------------------

def test_matmul_identity_and_hand_product():
    m = Tensor([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(matmul(Tensor(np.eye(2)), m).data, m.data)
    np.testing.assert_array_equal(matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]])).data, [[11.0]])


def test_matmul_inner_mismatch_raises():
    with pytest.raises(ShapeError):
        matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


def test_matmul_gradient_of_dot_product(rng):
    a = param(rng.normal(size=(1, 4)))
    b = Tensor(rng.normal(size=(4, 1)))
    with Tape() as tape:
        tape.backward(sum_(matmul(a, b)))
    np.testing.assert_allclose(a.grad[0], b.data[:, 0], atol=1e-6)


def test_matmul_is_layout_independent(rng):
    a = rng.normal(size=(5, 3))
    b = rng.normal(size=(3, 4))
    fortran = np.asfortranarray(a)
    np.testing.assert_array_equal(matmul(Tensor.wrap(a), Tensor.wrap(b)).data,
                                  matmul(Tensor.wrap(fortran), Tensor.wrap(b)).data)


# softmax / layer norm ------------------------------------------------------

def test_softmax_examples():
    np.testing.assert_allclose(softmax(Tensor([0.0, 0.0, 0.0])).data, [1 / 3, 1 / 3, 1 / 3], atol=1e-15)
    np.testing.assert_allclose(softmax(Tensor([1.0, 2.0])).data, [0.26894, 0.73106], atol=1e-5)
    stable = softmax(Tensor([1000.0, 0.0])).data
    assert np.all(np.isfinite(stable))
    assert stable[0] == pytest.approx(1.0)


def test_softmax_rows_sum_to_one(rng):
    s = softmax(Tensor(rng.normal(size=(6, 5)) * 20.0), axis=-1).data
    np.testing.assert_allclose(s.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all((s > 0) & (s < 1))


def test_layer_norm_examples():
    np.testing.assert_allclose(layer_norm(Tensor([1.0, 2.0, 3.0])).data, [-1.2247, 0.0, 1.2247], atol=1e-3)
    np.testing.assert_array_equal(layer_norm(Tensor([4.0, 4.0, 4.0])).data, [0.0, 0.0, 0.0])


# conv / pool -------------------------------------------------------------

def test_conv1d_smoothing_examples():
    k = np.full(3, 1.0 / 3.0)
    const = conv1d(Tensor(np.full((4, 1), 5.0)), k).data[:, 0]
    np.testing.assert_allclose(const, [5.0, 5.0, 5.0, 5.0], atol=1e-12)
    ramp = conv1d(Tensor(np.array([[1.0], [2.0], [3.0], [4.0]])), k).data[:, 0]
    np.testing.assert_allclose(ramp, [4 / 3, 2.0, 3.0, 11 / 3], atol=1e-12)


def test_conv1d_stride_two_halves_length(rng):
    x = Tensor(rng.normal(size=(2, 7, 3)))
    kernel = Tensor(rng.normal(size=(3, 3, 5)))
    assert conv1d(x, kernel, stride=2).shape == (2, 3, 5)


def test_conv1d_zero_padding_differs_at_edges():
    x = Tensor(np.array([[1.0], [2.0], [3.0]]))
    k = np.full(3, 1.0 / 3.0)
    np.testing.assert_allclose(conv1d(x, k, padding="zero").data[:, 0], [1.0, 2.0, 5 / 3], atol=1e-12)


def test_maxpool_examples():
    x = Tensor(np.array([[1.0], [3.0], [2.0], [5.0]]), requires_grad=True)
    with Tape() as tape:
        out = maxpool1d(x, 3, 2)
        tape.backward(sum_(out))
    np.testing.assert_array_equal(out.data[:, 0], [3.0, 5.0])
    np.testing.assert_array_equal(x.grad[:, 0], [0.0, 1.0, 0.0, 1.0])
    np.testing.assert_array_equal(maxpool1d(Tensor(np.full((6, 2), 7.0))).data, np.full((3, 2), 7.0))


def test_maxpool_ties_route_to_first_index():
    x = Tensor(np.array([[2.0], [2.0], [1.0]]), requires_grad=True)
    with Tape() as tape:
        tape.backward(sum_(maxpool1d(x, 3, 2)))
    np.testing.assert_array_equal(x.grad[:, 0], [1.0, 0.0, 0.0])


# reductions / indexing -----------------------------------------------------

def test_reduce_examples():
    assert mean(Tensor([1.0, 3.0])).item() == 2.0
    assert std(Tensor([1.0, 2.0, 3.0])).item() == pytest.approx(0.8165, abs=1e-3)
    assert std(Tensor([2.0, 2.0, 2.0])).item() == 0.0
    assert reduce(Tensor(np.ones((2, 3))), "sum", axes=1, keepdims=True).shape == (2, 1)
    with pytest.raises(ValueError):
        reduce(Tensor([1.0]), "median")


def test_std_of_constant_is_zero_with_finite_gradient():
    x = Tensor(np.full((2, 4), 3.5), requires_grad=True)
    with Tape() as tape:
        out = std(x, axes=1)
        tape.backward(sum_(out))
    np.testing.assert_array_equal(out.data, [0.0, 0.0])
    np.testing.assert_array_equal(x.grad, np.zeros((2, 4)))


def test_embedding_lookup_rows_and_accumulation():
    table = Tensor(np.eye(4), requires_grad=True)
    np.testing.assert_array_equal(embedding_lookup(table, np.array(2)).data, [0.0, 0.0, 1.0, 0.0])
    with Tape() as tape:
        tape.backward(sum_(embedding_lookup(table, np.array([0, 0]))))
    np.testing.assert_array_equal(table.grad[0], [2.0, 2.0, 2.0, 2.0])
    np.testing.assert_array_equal(table.grad[1:], 0.0)


def test_embedding_lookup_out_of_range_names_feature():
    with pytest.raises(IndexError, match="hour"):
        embedding_lookup(Tensor(np.zeros((24, 2))), np.array([[3, 24]]), feature="hour")


# backward ------------------------------------------------------------------

def test_backward_square_and_sigmoid():
    x = param(3.0)
    with Tape() as tape:
        tape.backward(mul(x, x))
    assert x.grad == pytest.approx(6.0)

    z = param(0.0)
    with Tape():
        backward(sigmoid(z))
    assert z.grad == pytest.approx(0.25)


def test_backward_rejects_non_scalar():
    x = param([1.0, 2.0])
    with Tape() as tape:
        y = scale(x, 2.0)
        with pytest.raises(ShapeError):
            tape.backward(y)


def test_backward_accumulates_until_reset(rng):
    x = param(rng.normal(size=3))
    with Tape() as tape:
        loss = sum_(mul(x, x))
    tape.backward(loss)
    first = x.grad.copy()
    tape.backward(loss)
    np.testing.assert_array_equal(x.grad, 2 * first)
    tape.reset()
    tape.backward(loss)
    np.testing.assert_array_equal(x.grad, first)


def test_ops_outside_tape_do_not_record():
    x = param([1.0])
    y = mul(x, 2.0)
    assert not y.requires_grad
    with pytest.raises(ShapeError):
        y.backward()


# gradient checks -----------------------------------------------------------

def test_grad_check_of_sum_is_exact(rng):
    assert grad_check(lambda x: sum_(x), param(rng.normal(size=5))) < 1e-9
    assert grad_check(lambda x: sum_(x), param(rng.normal(size=5)), norm="normwise") < 1e-9


def test_normwise_error_ignores_vanishing_components():
    x = param([1.0, 1e-9, -2.0])
    assert grad_check(lambda v: sum_(mul(v, v)), x, norm="normwise") < 1e-8
    np.testing.assert_array_equal(x.data, [1.0, 1e-9, -2.0])
    assert grad_check(lambda v: scale(sum_(v), 0.0), param([1.0, 2.0]), norm="normwise") == 0.0
    with pytest.raises(ConfigError):
        grad_check(lambda v: sum_(v), x, norm="max")


@pytest.mark.parametrize("seed", range(20))
def test_every_op_passes_grad_check(seed):
    rng = np.random.default_rng(seed)
    w = Tensor(rng.normal(size=(4, 3)))
    weights = Tensor(rng.normal(size=(2, 6, 3)))
    gain, bias = Tensor(rng.normal(size=4) + 1.0), Tensor(rng.normal(size=4))
    kernel_full = Tensor(rng.normal(size=(3, 3, 2)))
    cases = {
        "elementwise": (lambda x: sum_(mul(sigmoid(x), add(x, 1.5))), (2, 3)),
        "div": (lambda x: sum_(elementwise("div", x, add(mul(x, x), 1.0))), (5,)),
        "matmul": (lambda x: sum_(mul(matmul(x, w), Tensor(rng_like(seed, (2, 3))))), (2, 4)),
        "softmax": (lambda x: sum_(mul(softmax(x, axis=-1), Tensor(rng_like(seed, (3, 4))))), (3, 4)),
        "layer_norm": (lambda x: sum_(mul(layer_norm(x, gain, bias), Tensor(rng_like(seed, (5, 4))))), (5, 4)),
        "conv_smooth": (lambda x: sum_(mul(conv1d(x, np.full(3, 1 / 3)), Tensor(rng_like(seed, (2, 6, 3))))),
                        (2, 6, 3)),
        "conv_learned": (lambda x: sum_(mul(conv1d(x, kernel_full, stride=2), Tensor(rng_like(seed, (2, 3, 2))))),
                         (2, 6, 3)),
        "maxpool": (lambda x: sum_(mul(maxpool1d(x), weights.data[:, :3, :] + 2.0)), (2, 6, 3)),
        "std": (lambda x: sum_(mul(std(x, axes=1), Tensor(rng_like(seed, (3,))))), (3, 5)),
        "mean": (lambda x: sum_(mul(mean(x, axes=0), Tensor(rng_like(seed, (5,))))), (3, 5)),
        "layout": (lambda x: sum_(mul(transpose(reshape(concat([x, x], axis=0), (3, 4)), (1, 0)),
                                      Tensor(rng_like(seed, (4, 3))))), (2, 3)),
        "take": (lambda x: sum_(mul(take(x, np.array([[0, 1], [1, 2]]), axis=0), Tensor(rng_like(seed, (2, 2, 2))))),
                 (3, 2)),
    }
    for name, (f, shape) in cases.items():
        err = grad_check(f, param(rng.normal(size=shape)))
        assert err < 1e-4, f"{name}: relative error {err}"


def test_learned_kernel_gradient(rng):
    x = Tensor(rng.normal(size=(2, 6, 3)))
    target = Tensor(rng.normal(size=(2, 3, 2)))
    err = grad_check(lambda k: sum_(mul(conv1d(x, k, stride=2), target)), param(rng.normal(size=(3, 3, 2))))
    assert err < 1e-4


def test_embedding_table_gradient(rng):
    idx = np.array([[0, 2, 2], [1, 0, 3]])
    target = Tensor(rng.normal(size=(2, 3, 2)))
    err = grad_check(lambda t: sum_(mul(embedding_lookup(t, idx), target)), param(rng.normal(size=(4, 2))))
    assert err < 1e-4


def rng_like(seed, shape):
    return np.random.default_rng(seed + 1000).normal(size=shape)


# modules -----------------------------------------------------------------

class Pair(Module):
    def __init__(self, seed):
        self.left = uniform_init(seed, "pair.left", (3, 2), fan_in=3)
        self.right = [constant_init("pair.right.0", (2,), 1.0)]


def test_module_parameters_and_state_round_trip():
    a, b = Pair(1), Pair(2)
    assert [name for name, _ in a.named_parameters()] == ["left", "right.0"]
    assert a.num_parameters() == 8
    b.load_state_dict(a.state_dict())
    np.testing.assert_array_equal(a.left.data, b.left.data)
    with pytest.raises(ShapeError):
        b.load_state_dict({"left": np.zeros((2, 2)), "right.0": np.zeros(2)})


def test_initializers_depend_only_on_seed_and_name():
    np.testing.assert_array_equal(uniform_init(5, "x", (2, 2), 2).data, uniform_init(5, "x", (2, 2), 2).data)
    assert not np.array_equal(uniform_init(5, "x", (2, 2), 2).data, uniform_init(5, "y", (2, 2), 2).data)
    w = orthonormal_init(3, "w", 6, 3).data
    np.testing.assert_allclose(w.T @ w, np.eye(3), atol=1e-12)
