"""KAN layer with polynomial edge functions, plus the plain linear and ReLU layers.

Every layer caches what its backward pass needs during ``forward`` and
accumulates (``+=``) parameter gradients in ``backward``.
"""
from __future__ import annotations

import numpy as np

from .basis import BasisSpec, evaluate
from .errors import ContractError, StateError
from .numerics import Parameter, as_tensor

NORM_EPS = 1e-5


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def silu(x):
    return x * sigmoid(x)


def silu_grad(x):
    s = sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


def _check_input(x, d_in, who):
    if x.ndim != 2 or x.shape[1] != d_in:
        raise ContractError(f"{who} expects input of shape (batch, {d_in}), got {x.shape}")


class KanLayer:
    """Sum over inputs of learnable univariate polynomial expansions.

    Output ``o`` before normalization is

        u_o = sum_j sum_k W[o, j, k] f_k(tanh(r_j)) + sum_j V[o, j] silu(r_j)

    followed, when ``normalize`` is on, by a per-sample affine normalization over
    the ``d_out`` outputs (``norm_scale``, ``norm_shift``).
    """

    def __init__(self, d_in, d_out, spec: BasisSpec, normalize=True, rng=None, prefix="kan"):
        if d_in <= 0 or d_out <= 0:
            raise ContractError(f"layer dimensions must be positive, got {d_in}->{d_out}")
        rng = np.random.default_rng() if rng is None else rng
        self.spec = spec
        self.d_in = int(d_in)
        self.d_out = int(d_out)
        self.normalize = bool(normalize)
        nb = spec.degree + 1
        self.poly_weights = Parameter(
            f"{prefix}.poly_weights",
            rng.normal(0.0, np.sqrt(1.0 / (nb * d_in)), size=(d_out, d_in, nb)),
        )
        bound = np.sqrt(1.0 / d_in)
        self.base_weights = Parameter(
            f"{prefix}.base_weights", rng.uniform(-bound, bound, size=(d_out, d_in))
        )
        self.norm_scale = Parameter(f"{prefix}.norm_scale", np.ones(d_out))
        self.norm_shift = Parameter(f"{prefix}.norm_shift", np.zeros(d_out))
        self._cache = None

    def parameters(self):
        return [self.poly_weights, self.base_weights, self.norm_scale, self.norm_shift]

    def forward(self, r):
        r = as_tensor(r)
        _check_input(r, self.d_in, "KanLayer")
        m = r.shape[0]
        nb = self.spec.degree + 1
        gamma = np.tanh(r)
        table = evaluate(gamma, self.spec)
        basis = table.values.reshape(m, self.d_in * nb)
        act = silu(r)
        u = basis @ self.poly_weights.value.reshape(self.d_out, -1).T
        u += act @ self.base_weights.value.T
        if self.normalize:
            mu = u.mean(axis=1, keepdims=True)
            centered = u - mu
            inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=1, keepdims=True) + NORM_EPS)
            xhat = centered * inv_std
            s = xhat * self.norm_scale.value + self.norm_shift.value
        else:
            xhat = inv_std = None
            s = u
        self._cache = (r, gamma, basis, table.derivs, act, xhat, inv_std)
        return s

    def backward(self, grad_s):
        if self._cache is None:
            raise StateError("KanLayer.backward called before forward")
        r, gamma, basis, derivs, act, xhat, inv_std = self._cache
        grad_s = as_tensor(grad_s)
        if grad_s.shape != (r.shape[0], self.d_out):
            raise ContractError(f"gradient shape {grad_s.shape} does not match layer output")
        if self.normalize:
            self.norm_shift.grad += grad_s.sum(axis=0)
            self.norm_scale.grad += (grad_s * xhat).sum(axis=0)
            gx = grad_s * self.norm_scale.value
            grad_u = inv_std * (
                gx
                - gx.mean(axis=1, keepdims=True)
                - xhat * (gx * xhat).mean(axis=1, keepdims=True)
            )
        else:
            grad_u = grad_s
        w = self.poly_weights.value.reshape(self.d_out, -1)
        self.poly_weights.grad += (grad_u.T @ basis).reshape(self.poly_weights.shape)
        self.base_weights.grad += grad_u.T @ act
        m, nb = r.shape[0], self.spec.degree + 1
        grad_basis = (grad_u @ w).reshape(m, self.d_in, nb)
        grad_gamma = np.einsum("mjk,mjk->mj", grad_basis, derivs.reshape(m, self.d_in, nb))
        grad_r = grad_gamma * (1.0 - gamma * gamma)
        grad_r += (grad_u @ self.base_weights.value) * silu_grad(r)
        return grad_r

    def num_params(self):
        return sum(p.size for p in self.parameters())


class LinearLayer:
    """``y = x W^T + b``."""

    def __init__(self, d_in, d_out, rng=None, prefix="linear"):
        if d_in <= 0 or d_out <= 0:
            raise ContractError(f"layer dimensions must be positive, got {d_in}->{d_out}")
        rng = np.random.default_rng() if rng is None else rng
        self.d_in = int(d_in)
        self.d_out = int(d_out)
        bound = np.sqrt(1.0 / d_in)
        self.weights = Parameter(f"{prefix}.weights", rng.uniform(-bound, bound, (d_out, d_in)))
        self.bias = Parameter(f"{prefix}.bias", rng.uniform(-bound, bound, d_out))
        self._x = None

    def parameters(self):
        return [self.weights, self.bias]

    def forward(self, x):
        x = as_tensor(x)
        _check_input(x, self.d_in, "LinearLayer")
        self._x = x
        return x @ self.weights.value.T + self.bias.value

    def backward(self, grad_y):
        if self._x is None:
            raise StateError("LinearLayer.backward called before forward")
        grad_y = as_tensor(grad_y)
        if grad_y.shape != (self._x.shape[0], self.d_out):
            raise ContractError(f"gradient shape {grad_y.shape} does not match layer output")
        self.weights.grad += grad_y.T @ self._x
        self.bias.grad += grad_y.sum(axis=0)
        return grad_y @ self.weights.value

    def num_params(self):
        return sum(p.size for p in self.parameters())


class ReLU:
    def __init__(self):
        self._mask = None

    def parameters(self):
        return []

    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad_y):
        if self._mask is None:
            raise StateError("ReLU.backward called before forward")
        return np.where(self._mask, grad_y, 0.0)


class Sequential:
    """Apply layers in order; used to pair a linear map with its ReLU."""

    def __init__(self, *layers):
        self.layers = list(layers)

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad
