"""Parameter containers, the SGD-momentum update and the finite-difference gradient check.

Tensors are plain C-contiguous ``float64`` numpy arrays: ``shape`` plus a flat
row-major buffer is exactly what an ndarray already is.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .errors import ContractError, NonFiniteError

DTYPE = np.float64


def as_tensor(x) -> np.ndarray:
    """Return ``x`` as a C-contiguous float64 array (copying only when needed)."""
    return np.ascontiguousarray(x, dtype=DTYPE)


@dataclass
class Parameter:
    """A trainable tensor with its accumulated gradient and momentum buffer."""

    name: str
    value: np.ndarray
    grad: np.ndarray = field(init=False)
    momentum_buffer: np.ndarray = field(init=False)

    def __post_init__(self):
        self.value = np.array(self.value, dtype=DTYPE, order="C")
        self.grad = np.zeros_like(self.value)
        self.momentum_buffer = np.zeros_like(self.value)

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def size(self) -> int:
        return int(self.value.size)

    def zero_grad(self) -> None:
        self.grad.fill(0.0)


def sgd_step(params: Iterable[Parameter], lr: float, momentum: float) -> None:
    """Heavy-ball SGD: ``buf = momentum*buf + grad; value -= lr*buf``; grads are zeroed after.

    Every gradient is checked before any parameter is touched, so a non-finite
    gradient leaves the whole model unchanged.
    """
    if lr < 0:
        raise ValueError(f"learning rate must be non-negative, got {lr}")
    if not 0.0 <= momentum < 1.0:
        raise ValueError(f"momentum must lie in [0, 1), got {momentum}")
    params = list(params)
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            bad = int(np.flatnonzero(~np.isfinite(p.grad.ravel()))[0])
            raise NonFiniteError(
                f"non-finite gradient in parameter {p.name!r} at flat index {bad}"
            )
    for p in params:
        buf = p.momentum_buffer
        buf *= momentum
        buf += p.grad
        p.value -= lr * buf
        p.zero_grad()


def finite_diff_check(
    f: Callable[[np.ndarray], float],
    x: np.ndarray,
    analytic_grad: np.ndarray,
    h: float | None = None,
) -> float:
    """Max relative error between ``analytic_grad`` and central differences of ``f`` at ``x``.

    ``x`` is perturbed in place and restored after each coordinate, so ``f`` may
    close over the very array being checked (e.g. a parameter's value). The per
    coordinate step is ``h * max(1, |x_i|)`` with ``h`` defaulting to 1e-5.
    """
    if x.shape != analytic_grad.shape:
        raise ContractError(
            f"gradient shape {analytic_grad.shape} does not match input shape {x.shape}"
        )
    if x.dtype != DTYPE or not x.flags.c_contiguous:
        raise ContractError("finite_diff_check needs a C-contiguous float64 array")
    base_h = 1e-5 if h is None else h
    flat = x.reshape(-1)
    grad = analytic_grad.reshape(-1)
    worst = 0.0
    for i in range(flat.size):
        orig = flat[i]
        step = base_h * max(1.0, abs(orig))
        flat[i] = orig + step
        f_plus = float(f(x))
        flat[i] = orig - step
        f_minus = float(f(x))
        flat[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NonFiniteError(f"function value is not finite when perturbing coordinate {i}")
        numeric = (f_plus - f_minus) / (2.0 * step)
        analytic = float(grad[i])
        err = abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))
        worst = max(worst, err)
    return worst
