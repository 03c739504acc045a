"""Tensor forward ops and tape gradients against hand values and the
finite-difference oracle."""

import numpy as np
import pytest

from trafficgcn import tensor as T
from trafficgcn.errors import ContractError, ShapeError
from trafficgcn.gradcheck import (
    check_composition,
    finite_difference,
    random_composition_error,
    relative_error,
)
from trafficgcn.tensor import GradientTape, Tensor


class TestForward:
    def test_matmul_identity(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        out = T.matmul(Tensor.eye(2), a)
        np.testing.assert_array_equal(out.data, a.data)

    def test_matmul_hand_value(self):
        # 1*3 + 2*4 = 11
        out = T.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
        np.testing.assert_array_equal(out.data, [[11.0]])

    def test_matmul_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"2x3.*4x2"):
            T.matmul(Tensor.zeros(2, 3), Tensor.zeros(4, 2))

    def test_sigmoid_at_zero(self):
        assert T.sigmoid(Tensor.zeros(1, 1)).item() == 0.5

    def test_tanh_at_zero(self):
        assert T.tanh(Tensor.zeros(1, 1)).item() == 0.0

    def test_relu_definition(self):
        out = T.relu(Tensor([[-1.0, 2.0]]))
        np.testing.assert_array_equal(out.data, [[0.0, 2.0]])

    def test_binary_shape_mismatch(self):
        for kind in ("add", "sub", "hadamard"):
            with pytest.raises(ShapeError):
                T.elementwise(kind, Tensor.zeros(2, 2), Tensor.zeros(2, 3))

    def test_elementwise_dispatch_contract(self):
        with pytest.raises(ContractError):
            T.elementwise("add", Tensor.zeros(1, 1))
        with pytest.raises(ContractError):
            T.elementwise("sigmoid", Tensor.zeros(1, 1), Tensor.zeros(1, 1))
        with pytest.raises(ContractError):
            T.elementwise("exp", Tensor.zeros(1, 1))

    def test_finite_outputs_on_large_inputs(self):
        big = Tensor(np.array([[1e6, -1e6], [123.0, -456.0]]))
        for op in (T.sigmoid, T.tanh, T.relu):
            assert np.isfinite(op(big).data).all()
        assert np.isfinite(T.softmax_rows(big).data).all()


class TestSoftmax:
    def test_equal_scores_are_uniform(self):
        for c in (-3.0, 0.0, 42.0):
            out = T.softmax_vector(Tensor([[c], [c], [c]]))
            np.testing.assert_allclose(out.data, np.full((3, 1), 1 / 3), atol=1e-15)

    def test_quarter_three_quarters(self):
        # exp(0) : exp(ln 3) = 1 : 3
        out = T.softmax_vector(Tensor([[0.0], [np.log(3.0)]]))
        np.testing.assert_allclose(out.data, [[0.25], [0.75]], atol=1e-12)

    def test_no_overflow_on_huge_scores(self):
        out = T.softmax_vector(Tensor([[1000.0], [1000.0]]))
        np.testing.assert_allclose(out.data, [[0.5], [0.5]], atol=1e-15)

    def test_sums_to_one(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            e = Tensor(rng.normal(0, 5, (int(rng.integers(1, 9)), 1)))
            assert abs(T.softmax_vector(e).data.sum() - 1.0) < 1e-12

    def test_requires_column(self):
        with pytest.raises(ShapeError):
            T.softmax_vector(Tensor.zeros(2, 2))


class TestBackward:
    def test_gradient_of_sum_of_parameter_is_one(self):
        p = Tensor([[2.0, -1.0], [0.5, 3.0]])
        with GradientTape() as tape:
            tape.watch(p)
            grads = tape.gradients(T.sum_all(p))
        np.testing.assert_array_equal(grads[p], np.ones((2, 2)))

    def test_quadratic_gradient(self):
        # d/dp sum((p - 3)^2) at p = 5 is 2 * (5 - 3) = 4
        p = Tensor([[5.0]])
        three = Tensor([[3.0]])
        with GradientTape() as tape:
            tape.watch(p)
            d = T.sub(p, three)
            grads = tape.gradients(T.sum_sq(d))
        np.testing.assert_allclose(grads[p], [[4.0]])

    def test_matmul_gradient_matches_frozen_fd_value(self):
        # central differences (step 1e-5) on sum(A @ B) at A=[[1,1]],
        # B=[[2],[5]] give [[2, 5]]; the tape must agree
        a = np.array([[1.0, 1.0]])
        b = np.array([[2.0], [5.0]])

        def value(arrs):
            return float((arrs["a"] @ arrs["b"])[0, 0])

        fd = finite_difference(value, {"a": a, "b": b})
        np.testing.assert_allclose(fd["a"], [[2.0, 5.0]], atol=1e-7)

        ta, tb = Tensor(a), Tensor(b)
        with GradientTape() as tape:
            tape.watch(ta)
            grads = tape.gradients(T.sum_all(T.matmul(ta, tb)))
        np.testing.assert_allclose(grads[ta], [[2.0, 5.0]], atol=1e-12)

    def test_unused_parameter_gets_exact_zero(self):
        used = Tensor([[1.0]])
        unused = Tensor([[7.0]])
        with GradientTape() as tape:
            tape.watch(used)
            tape.watch(unused)
            grads = tape.gradients(T.sum_all(T.scale(used, 2.0)))
        np.testing.assert_array_equal(grads[unused], [[0.0]])
        np.testing.assert_array_equal(grads[used], [[2.0]])

    def test_double_backward_fails_loudly(self):
        p = Tensor([[1.0]])
        with GradientTape() as tape:
            tape.watch(p)
            out = T.sum_all(p)
            tape.gradients(out)
            with pytest.raises(ContractError):
                tape.gradients(out)

    def test_non_scalar_root_rejected(self):
        p = Tensor([[1.0, 2.0]])
        with GradientTape() as tape:
            tape.watch(p)
            out = T.scale(p, 1.0)
            with pytest.raises(ContractError):
                tape.gradients(out)

    def test_no_recording_without_tape(self):
        out = T.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
        assert out.data[0, 0] == 11.0

    def test_reuse_of_same_tensor_accumulates(self):
        p = Tensor([[2.0]])
        with GradientTape() as tape:
            tape.watch(p)
            grads = tape.gradients(T.sum_all(T.hadamard(p, p)))
        np.testing.assert_allclose(grads[p], [[4.0]])


class TestGradientOracle:
    def test_hundred_random_compositions(self):
        # shapes <= 6x6, central differences with step 1e-5, relative
        # error below 1e-4 with denominator max(1, |fd|)
        worst = 0.0
        for seed in range(100):
            worst = max(worst, random_composition_error(seed))
        assert worst < 1e-4, f"worst relative error {worst:.3e}"

    def test_concat_split_rule(self):
        def build(t):
            joined = T.concat_cols([t["x"], t["h"]])
            return T.sum_all(T.tanh(T.matmul(joined, t["w"])))

        rng = np.random.default_rng(0)
        arrays = {
            "x": rng.standard_normal((3, 1)),
            "h": rng.standard_normal((3, 4)),
            "w": rng.standard_normal((5, 2)),
        }
        assert check_composition(build, arrays) < 1e-4

    def test_relative_error_floors_denominator(self):
        assert relative_error(np.array([[1e-6]]), np.array([[0.0]])) == 1e-6


class TestImmutability:
    def test_data_is_read_only(self):
        t = Tensor([[1.0]])
        with pytest.raises(ValueError):
            t.data[0, 0] = 2.0

    def test_constructor_rejects_non_2d(self):
        with pytest.raises(ShapeError):
            Tensor([1.0, 2.0])
