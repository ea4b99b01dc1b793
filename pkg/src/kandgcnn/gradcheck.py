"""Finite-difference validation of every hand-written backward pass."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import DISCRETE_CHEBYSHEV, JACOBI, BasisSpec, evaluate
from .graph import edge_backward, edge_features, knn_graph
from .layers import KanLayer, LinearLayer, ReLU, Sequential
from .model import KAN, MLP, Model, ModelConfig
from .numerics import finite_diff_check
from .train import cross_entropy

JACOBI_PARAMS = ((1.0, 1.0), (0.0, 0.0), (-0.5, -0.5))
DEGREES = (1, 2, 3, 4)


@dataclass
class CheckResult:
    component: str
    max_error: float


def suite_bases():
    specs = [BasisSpec(JACOBI, d, a, b) for a, b in JACOBI_PARAMS for d in DEGREES]
    specs += [BasisSpec(DISCRETE_CHEBYSHEV, d) for d in DEGREES]
    return specs


def basis_label(spec: BasisSpec) -> str:
    if spec.family == JACOBI:
        return f"jacobi({spec.alpha:g},{spec.beta:g}) deg {spec.degree}"
    return f"discrete-chebyshev deg {spec.degree}"


def check_layer(layer, x, rng):
    """Worst error over the layer's parameters and its input, for ``f = sum(R * layer(x))``."""
    probe = rng.normal(size=layer.forward(x).shape)

    def loss(_=None):
        return float((layer.forward(x) * probe).sum())

    for p in layer.parameters():
        p.zero_grad()
    layer.forward(x)
    grad_x = layer.backward(probe)
    worst = finite_diff_check(loss, x, grad_x)
    for p in layer.parameters():
        worst = max(worst, finite_diff_check(loss, p.value, p.grad.copy()))
    return worst


def check_basis(spec, rng):
    gamma = rng.uniform(-0.9, 0.9, size=7)
    w = rng.normal(size=spec.degree + 1)
    table = evaluate(gamma, spec)
    analytic = table.derivs @ w

    def f(g):
        return float((evaluate(g, spec).values @ w).sum())

    return finite_diff_check(f, gamma, analytic)


def check_edgeconv(rng, n=7, f=3, k=3):
    x = rng.normal(size=(n, f))
    g = knn_graph(x, k)
    probe = rng.normal(size=(n, k, 2 * f))
    analytic = edge_backward(probe, g)
    return finite_diff_check(lambda xx: float((edge_features(xx, g) * probe).sum()), x, analytic)


def check_cross_entropy(rng, batch=4, classes=5):
    logits = rng.normal(size=(batch, classes))
    labels = rng.integers(0, classes, size=batch)
    _, grad = cross_entropy(logits, labels)
    return finite_diff_check(lambda z: cross_entropy(z, labels)[0], logits, grad)


def tiny_config(layer=KAN, spec=None) -> ModelConfig:
    return ModelConfig(
        layer=layer, basis=spec or BasisSpec(), k=2, edge_hidden=4, embedding=8, num_classes=3
    )


def check_model(config: ModelConfig, rng, batch=2, n=6):
    """Loss gradient w.r.t. every parameter and (graph frozen) the input coordinates."""
    model = Model(config, rng)
    clouds = rng.normal(size=(batch, n, config.input_dim))
    labels = rng.integers(0, config.num_classes, size=batch)
    graphs = [knn_graph(c, config.k) for c in clouds]

    def loss(_=None):
        return cross_entropy(model.forward(clouds, graphs), labels)[0]

    model.zero_grad()
    _, grad = cross_entropy(model.forward(clouds, graphs), labels)
    grad_x = model.backward(grad)
    worst = finite_diff_check(loss, clouds, grad_x)
    for p in model.parameters():
        worst = max(worst, finite_diff_check(loss, p.value, p.grad.copy()))
    return worst


def run_suite(seed=0):
    """All finite-difference checks; returns one ``CheckResult`` per component."""
    rng = np.random.default_rng(seed)
    results = []
    for spec in suite_bases():
        results.append(CheckResult(f"basis {basis_label(spec)}", check_basis(spec, rng)))
    for spec in suite_bases():
        for normalize in (True, False):
            layer = KanLayer(4, 5, spec, normalize=normalize, rng=rng)
            x = rng.normal(size=(3, 4))
            tag = "norm" if normalize else "no-norm"
            results.append(CheckResult(f"kan {basis_label(spec)} {tag}", check_layer(layer, x, rng)))
    results.append(CheckResult("linear", check_layer(LinearLayer(4, 5, rng), rng.normal(size=(3, 4)), rng)))
    mlp_block = Sequential(LinearLayer(4, 5, rng), ReLU())
    results.append(CheckResult("linear+relu", check_layer(mlp_block, rng.normal(size=(3, 4)), rng)))
    results.append(CheckResult("edgeconv", check_edgeconv(rng)))
    results.append(CheckResult("softmax cross-entropy", check_cross_entropy(rng)))
    for spec in suite_bases():
        results.append(CheckResult(f"model kan {basis_label(spec)}", check_model(tiny_config(KAN, spec), rng)))
    results.append(CheckResult("model mlp", check_model(tiny_config(MLP), rng)))
    return results
