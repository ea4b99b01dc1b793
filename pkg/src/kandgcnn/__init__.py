"""Polynomial-basis KAN layers in a single-EdgeConv DGCNN for point-cloud classification."""
from .basis import BasisSpec, eval_discrete_chebyshev, eval_jacobi, jacobi_coeffs
from .kernels import BACKEND
from .layers import KanLayer, LinearLayer
from .model import Model, ModelConfig, count_params

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BasisSpec",
    "KanLayer",
    "LinearLayer",
    "Model",
    "ModelConfig",
    "count_params",
    "eval_discrete_chebyshev",
    "eval_jacobi",
    "jacobi_coeffs",
]
