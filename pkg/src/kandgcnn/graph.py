"""k-nearest-neighbour graphs over point features and EdgeConv edge features."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, ContractError
from .numerics import as_tensor


@dataclass
class KnnGraph:
    """Neighbour lists, one row per point, sorted by distance then index; self excluded."""

    num_points: int
    k: int
    neighbors: np.ndarray  # (num_points, k) int64


def knn_graph(x, k: int) -> KnnGraph:
    """Directed kNN graph under squared Euclidean distance.

    Ties are broken towards the lower index, which makes the neighbour order
    (and hence everything downstream) deterministic.
    """
    x = as_tensor(x)
    if x.ndim != 2:
        raise ContractError(f"expected (N, F) features, got shape {x.shape}")
    n = x.shape[0]
    if not 1 <= k <= n - 1:
        raise ConfigError(f"k must satisfy 1 <= k <= N-1, got k={k} for N={n}")
    return KnnGraph(n, int(k), kernels.knn_indices(x, k))


def edge_features(x, g: KnnGraph) -> np.ndarray:
    """``(N, k, 2F)`` tensor: ``x_i`` followed by ``x_j - x_i`` for each edge ``i -> j``."""
    x = as_tensor(x)
    if x.ndim != 2 or x.shape[0] != g.num_points:
        raise ContractError(
            f"graph built over {g.num_points} points but features have shape {x.shape}"
        )
    nbr = g.neighbors
    if nbr.size and (nbr.min() < 0 or nbr.max() >= g.num_points):
        raise ContractError("neighbour index out of range")
    n, f = x.shape
    out = np.empty((n, g.k, 2 * f))
    center = x[:, None, :]
    out[:, :, :f] = center
    out[:, :, f:] = x[nbr] - center
    return out


def edge_backward(grad_edge, g: KnnGraph) -> np.ndarray:
    """Gradient of a scalar w.r.t. ``x`` given its gradient w.r.t. ``edge_features(x, g)``.

    Neighbour selection is treated as fixed.
    """
    grad_edge = as_tensor(grad_edge)
    if grad_edge.ndim != 3 or grad_edge.shape[:2] != (g.num_points, g.k):
        raise ContractError(f"edge gradient shape {grad_edge.shape} does not match the graph")
    f = grad_edge.shape[2] // 2
    grad_global = grad_edge[:, :, :f]
    grad_local = grad_edge[:, :, f:]
    grad_x = np.ascontiguousarray((grad_global - grad_local).sum(axis=1))
    kernels.scatter_add_rows(grad_x, g.neighbors.reshape(-1), grad_local.reshape(-1, f))
    return grad_x
