import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kandgcnn.basis import DISCRETE_CHEBYSHEV, JACOBI, BasisSpec
from kandgcnn.errors import ContractError, StateError
from kandgcnn.gradcheck import check_layer, suite_bases
from kandgcnn.layers import KanLayer, LinearLayer, ReLU, Sequential, silu


def single_input_layer():
    layer = KanLayer(1, 1, BasisSpec(JACOBI, 1, 1.0, 1.0), normalize=False)
    layer.poly_weights.value[...] = [[[0.0, 1.0]]]
    layer.base_weights.value[...] = 0.0
    return layer


def test_single_input_forward():
    layer = single_input_layer()
    np.testing.assert_array_equal(layer.forward([[0.0]]), [[0.0]])
    np.testing.assert_allclose(layer.forward([[1.0]]), [[2 * np.tanh(1.0)]], rtol=1e-15)
    assert abs(layer.forward([[1.0]])[0, 0] - 1.5232) < 1e-4


def test_single_input_backward():
    layer = single_input_layer()
    layer.forward([[0.0]])
    grad_r = layer.backward(np.array([[1.0]]))
    assert layer.poly_weights.grad[0, 0, 1] == 0.0
    np.testing.assert_allclose(grad_r, [[2.0]], rtol=1e-15)


def test_zero_weights_zero_output(rng):
    layer = KanLayer(3, 4, BasisSpec(JACOBI, 3), normalize=False, rng=rng)
    layer.poly_weights.value[...] = 0
    layer.base_weights.value[...] = 0
    np.testing.assert_array_equal(layer.forward(rng.normal(size=(5, 3))), 0.0)


def test_zero_upstream_gradient(rng):
    layer = KanLayer(3, 4, BasisSpec(JACOBI, 2), rng=rng)
    layer.forward(rng.normal(size=(5, 3)))
    assert np.all(layer.backward(np.zeros((5, 4))) == 0)
    for p in layer.parameters():
        assert np.all(p.grad == 0)


@pytest.mark.parametrize("spec", suite_bases(), ids=str)
@pytest.mark.parametrize("normalize", [True, False])
def test_kan_gradients(spec, normalize, rng):
    layer = KanLayer(4, 5, spec, normalize=normalize, rng=rng)
    assert check_layer(layer, rng.normal(size=(3, 4)), rng) < 1e-4


@settings(max_examples=40)
@given(st.integers(1, 9), st.integers(1, 9), st.integers(0, 6), st.booleans())
def test_parameter_count_identity(d_in, d_out, n, cheb):
    spec = BasisSpec(DISCRETE_CHEBYSHEV if cheb else JACOBI, n)
    layer = KanLayer(d_in, d_out, spec)
    assert layer.num_params() == (n + 2) * d_in * d_out + 2 * d_out


def test_basis_inputs_strictly_inside(rng):
    layer = KanLayer(3, 2, BasisSpec(JACOBI, 2), rng=rng)
    r = rng.normal(scale=4.0, size=(50, 3))
    layer.forward(r)
    gamma = layer._cache[1]
    assert np.max(np.abs(gamma)) < 1


def test_no_poly_branch_is_linear_on_silu(rng):
    layer = KanLayer(4, 3, BasisSpec(JACOBI, 3), normalize=False, rng=rng)
    layer.poly_weights.value[...] = 0
    r = rng.normal(size=(6, 4))
    np.testing.assert_allclose(layer.forward(r), silu(r) @ layer.base_weights.value.T, atol=1e-14)


def test_normalized_output_statistics(rng):
    layer = KanLayer(4, 16, BasisSpec(JACOBI, 3), rng=rng)
    s = layer.forward(rng.normal(size=(6, 4)))
    np.testing.assert_allclose(s.mean(axis=1), 0.0, atol=1e-12)
    np.testing.assert_allclose(s.std(axis=1), 1.0, atol=1e-3)


def test_lipschitz_smoke(rng):
    layer = KanLayer(5, 4, BasisSpec(JACOBI, 3), rng=rng)
    ratios = []
    for _ in range(50):
        r = rng.normal(size=(1, 5))
        d = rng.normal(size=(1, 5))
        d *= 1e-6 / np.linalg.norm(d)
        ratios.append(np.linalg.norm(layer.forward(r + d) - layer.forward(r)) / 1e-6)
    assert max(ratios) < 1e3


def test_kan_contract_errors(rng):
    layer = KanLayer(3, 2, BasisSpec(JACOBI, 2), rng=rng)
    with pytest.raises(StateError):
        layer.backward(np.zeros((1, 2)))
    with pytest.raises(ContractError):
        layer.forward(np.zeros((2, 4)))
    layer.forward(np.zeros((2, 3)))
    with pytest.raises(ContractError):
        layer.backward(np.zeros((2, 3)))


def test_linear_examples():
    lin = LinearLayer(2, 2)
    lin.weights.value[...] = np.eye(2)
    lin.bias.value[...] = 0
    np.testing.assert_array_equal(lin.forward([[3.0, 4.0]]), [[3.0, 4.0]])
    lin = LinearLayer(2, 1)
    lin.weights.value[...] = [[1.0, 2.0]]
    lin.bias.value[...] = [1.0]
    np.testing.assert_array_equal(lin.forward([[1.0, 1.0]]), [[4.0]])


def test_linear_gradients(rng):
    assert check_layer(LinearLayer(4, 3, rng), rng.normal(size=(5, 4)), rng) < 1e-4
    block = Sequential(LinearLayer(4, 3, rng), ReLU())
    assert check_layer(block, rng.normal(size=(5, 4)), rng) < 1e-4


def test_linear_count():
    assert LinearLayer(7, 3).num_params() == 7 * 3 + 3


def test_linear_contract():
    lin = LinearLayer(2, 1)
    with pytest.raises(StateError):
        lin.backward(np.zeros((1, 1)))
    with pytest.raises(ContractError):
        lin.forward(np.zeros((1, 3)))
