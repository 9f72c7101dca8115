import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idmne import autodiff as ad
from idmne.autodiff import Tape, Tensor, finite_difference_grad, relative_error
from idmne.errors import DegenerateInputError, DimensionError, NumericError


def check_grad(build, *shapes, rng, tol=1e-6, positive=False):
    """Compare tape gradients of ``sum(build(*leaves))`` against central differences."""
    leaves = []
    for shape in shapes:
        data = rng.uniform(0.5, 2.0, shape) if positive else rng.standard_normal(shape)
        leaves.append(Tensor(data, requires_grad=True))
    with Tape() as tape:
        out = ad.sum_(build(*leaves))
    tape.backward(out)

    def value():
        return ad.sum_(build(*leaves)).item()

    for leaf in leaves:
        numeric = finite_difference_grad(value, leaf.data)
        assert relative_error(leaf.grad, numeric) < tol


def test_matmul_values():
    eye = Tensor(np.eye(2))
    m = Tensor([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(ad.matmul(eye, m).data, m.data)
    assert ad.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]])).data.tolist() == [[11.0]]


def test_matmul_shape_error_names_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_softmax_values():
    np.testing.assert_allclose(ad.softmax(Tensor([0.0, 0.0, 0.0])).data, [1 / 3] * 3, rtol=0, atol=1e-15)
    out = ad.softmax(Tensor([math.log(1), math.log(2), math.log(3)])).data
    np.testing.assert_allclose(out, [1 / 6, 2 / 6, 3 / 6], rtol=1e-14)


def test_softmax_is_stable_for_large_logits():
    out = ad.softmax(Tensor([1000.0, 0.0])).data
    assert np.all(np.isfinite(out)) and out[0] == 1.0


def test_softmax_rejects_nan():
    with pytest.raises(NumericError):
        ad.softmax(Tensor([0.0, np.nan]))


def test_l2_normalize_values():
    np.testing.assert_allclose(ad.l2_normalize(Tensor([3.0, 4.0])).data, [0.6, 0.8], rtol=1e-15)
    u = np.array([0.6, 0.8])
    np.testing.assert_allclose(ad.l2_normalize(Tensor(u)).data, u, rtol=1e-15)


def test_l2_normalize_degenerate():
    with pytest.raises(DegenerateInputError):
        ad.l2_normalize(Tensor([0.0, 1e-13]))


def test_relu_and_log_values():
    assert ad.relu(Tensor([-1.0, 2.0])).data.tolist() == [0.0, 2.0]
    assert ad.log(Tensor([1.0])).data.tolist() == [0.0]
    with pytest.raises(NumericError):
        ad.log(Tensor([0.0, 1.0]))


@pytest.mark.parametrize(
    "build, shapes, positive",
    [
        (lambda a, b: ad.matmul(a, b), [(3, 4), (4, 2)], False),
        (lambda a: ad.mul(ad.softmax(a), np.arange(5.0)), [(5,)], False),
        (lambda a: ad.mul(ad.softmax(a), np.arange(4.0)), [(3, 4)], False),
        (lambda a: ad.mul(ad.l2_normalize(a), np.arange(1.0, 5.0)), [(2, 4)], False),
        (lambda a: ad.relu(a), [(6,)], False),
        (lambda a, b: ad.add(a, b), [(3, 2), (2,)], False),
        (lambda a: ad.scale(a, -2.5), [(3,)], False),
        (lambda a: ad.log(a), [(4,)], True),
        (lambda a, b: ad.mul(a, b), [(2, 3), (2, 3)], False),
        (lambda a: ad.sum_(ad.mul(a, a), axis=1), [(3, 2)], False),
        (lambda a: ad.mean(ad.mul(a, a)), [(3, 2)], False),
        (lambda a: ad.take(ad.mul(a, a), [0, 2, 2]), [(3, 2)], False),
        (lambda a: ad.mul(ad.transpose(a), np.arange(6.0).reshape(2, 3)), [(3, 2)], False),
    ],
)
def test_op_gradients_match_finite_differences(build, shapes, positive, rng):
    check_grad(build, *shapes, rng=rng, positive=positive)


def _random_composition(rng, a, w):
    """A scalar function touching every registered op."""
    h = ad.relu(ad.add(ad.matmul(a, w), Tensor(np.full(w.shape[1], 0.1))))
    h = ad.add(h, ad.scale(ad.matmul(a, w), 0.5))
    p = ad.softmax(ad.scale(ad.l2_normalize(h), 3.0))
    q = ad.clip(ad.take(p, [1, 0, 1]), 1e-7, 1.0)
    return ad.mean(ad.mul(ad.log(q), np.linspace(-1, 1, q.shape[1])))


def test_random_compositions_hundred_trials(rng):
    worst = 0.0
    for _ in range(100):
        a = Tensor(rng.standard_normal((2, 3)), requires_grad=True)
        w = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        with Tape() as tape:
            out = _random_composition(rng, a, w)
        tape.backward(out)
        for leaf in (a, w):
            numeric = finite_difference_grad(lambda: _random_composition(rng, a, w).item(), leaf.data, h=1e-5)
            worst = max(worst, relative_error(leaf.grad, numeric))
    assert worst < 1e-4


def test_gradient_accumulates_over_shared_node():
    x = Tensor([2.0, 3.0], requires_grad=True)
    with Tape() as tape:
        y = ad.mul(x, x)
        out = ad.sum_(ad.add(y, y))
    tape.backward(out)
    np.testing.assert_array_equal(x.grad, [8.0, 12.0])


def test_forward_without_tape_is_bit_identical(rng):
    a = Tensor(rng.standard_normal((2, 3)), requires_grad=True)
    w = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    plain = _random_composition(rng, a, w).data
    with Tape():
        taped = _random_composition(rng, a, w).data
    assert plain.tobytes() == taped.tobytes()


def test_nodes_are_recorded_in_execution_order():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        a = ad.scale(x, 2.0)
        b = ad.relu(a)
        c = ad.sum_(b)
    assert [n.out for n in tape.nodes] == [a, b, c]


def test_tensor_from_another_tape_is_rejected():
    x = Tensor([1.0], requires_grad=True)
    with Tape():
        y = ad.scale(x, 2.0)
    with Tape(), pytest.raises(RuntimeError):
        ad.scale(y, 2.0)


def test_no_grad_records_nothing():
    x = Tensor([1.0], requires_grad=True)
    with Tape() as tape:
        with ad.no_grad():
            y = ad.scale(x, 2.0)
    assert tape.nodes == [] and not y.requires_grad


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=2, max_size=8))
def test_softmax_is_a_distribution(z):
    p = ad.softmax(Tensor(z)).data
    assert np.all(p > 0) and abs(p.sum() - 1.0) < 1e-12
