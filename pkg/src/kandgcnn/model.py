"""Single-EdgeConv DGCNN classifier with KAN (or linear) layers.

Pipeline per cloud of N points:

    kNN(k) -> edge features [x_i, x_j - x_i] -> edge layer -> max over neighbours
    -> per-point embedding layer -> concat(max over points, mean over points)
    -> head layer -> class logits
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .basis import JACOBI, BasisSpec
from .errors import ConfigError, ContractError, StateError
from .graph import edge_backward, edge_features, knn_graph
from .layers import KanLayer, LinearLayer, ReLU, Sequential
from .numerics import as_tensor

KAN = "kan"
MLP = "mlp"


@dataclass(frozen=True)
class ModelConfig:
    layer: str = KAN
    basis: BasisSpec = field(default_factory=BasisSpec)
    k: int = 5
    edge_hidden: int = 128
    embedding: int = 1024
    num_classes: int = 40
    input_dim: int = 3
    normalize: bool = True

    def __post_init__(self):
        if self.layer not in (KAN, MLP):
            raise ConfigError(f"layer must be 'kan' or 'mlp', got {self.layer!r}")
        for name in ("k", "edge_hidden", "embedding", "num_classes", "input_dim"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def layer_dims(self):
        """(d_in, d_out) of the edge, embedding and head layers."""
        return [
            (2 * self.input_dim, self.edge_hidden),
            (self.edge_hidden, self.embedding),
            (2 * self.embedding, self.num_classes),
        ]

    def to_strings(self) -> dict:
        flat = asdict(self)
        basis = flat.pop("basis")
        flat["basis_family"] = basis["family"]
        flat["degree"] = basis["degree"]
        flat["alpha"] = basis["alpha"]
        flat["beta"] = basis["beta"]
        return {key: repr(value) if isinstance(value, float) else str(value)
                for key, value in flat.items()}

    @classmethod
    def from_strings(cls, values: dict) -> "ModelConfig":
        try:
            basis = BasisSpec(
                family=values.get("basis_family", JACOBI),
                degree=int(values.get("degree", 3)),
                alpha=float(values.get("alpha", 1.0)),
                beta=float(values.get("beta", 1.0)),
            )
            return cls(
                layer=values["layer"],
                basis=basis,
                k=int(values["k"]),
                edge_hidden=int(values["edge_hidden"]),
                embedding=int(values["embedding"]),
                num_classes=int(values["num_classes"]),
                input_dim=int(values["input_dim"]),
                normalize=values.get("normalize", "True") == "True",
            )
        except KeyError as exc:
            raise ConfigError(f"model configuration is missing field {exc.args[0]!r}") from None


def count_params(config: ModelConfig) -> int:
    """Trainable scalars of the three layers, from their closed-form sizes."""
    total = 0
    for d_in, d_out in config.layer_dims:
        if config.layer == KAN:
            total += (config.basis.degree + 2) * d_in * d_out
            if config.normalize:
                total += 2 * d_out
        else:
            total += d_in * d_out + d_out
    return total


class Model:
    def __init__(self, config: ModelConfig, rng=None):
        self.config = config
        rng = np.random.default_rng() if rng is None else rng
        self.layers = {}
        for name, (d_in, d_out) in zip(("edge", "embed", "head"), config.layer_dims):
            if config.layer == KAN:
                layer = KanLayer(d_in, d_out, config.basis, config.normalize, rng, prefix=name)
            else:
                layer = LinearLayer(d_in, d_out, rng, prefix=name)
                if name != "head":
                    layer = Sequential(layer, ReLU())
            self.layers[name] = layer
        self._cache = None

    def parameters(self):
        return [p for layer in self.layers.values() for p in layer.parameters()]

    def named_parameters(self):
        return {p.name: p for p in self.parameters()}

    def num_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def forward(self, clouds, graphs=None) -> np.ndarray:
        """Class logits ``(batch, num_classes)`` for clouds of shape ``(batch, N, input_dim)``.

        ``graphs`` optionally supplies precomputed kNN graphs (one per cloud); by
        default they are rebuilt from the coordinates.
        """
        clouds = as_tensor(clouds)
        cfg = self.config
        if clouds.ndim != 3 or clouds.shape[2] != cfg.input_dim:
            raise ContractError(
                f"expected clouds of shape (batch, N, {cfg.input_dim}), got {clouds.shape}"
            )
        nb, n, _ = clouds.shape
        if n <= cfg.k:
            raise ConfigError(f"clouds need more than k={cfg.k} points, got {n}")
        if graphs is None:
            graphs = [knn_graph(cloud, cfg.k) for cloud in clouds]
        elif len(graphs) != nb:
            raise ContractError(f"{len(graphs)} graphs supplied for {nb} clouds")
        edges = np.stack([edge_features(cloud, g) for cloud, g in zip(clouds, graphs)])
        h = self.layers["edge"].forward(edges.reshape(nb * n * cfg.k, -1))
        h = h.reshape(nb, n, cfg.k, cfg.edge_hidden)
        # argmax returns the first maximum: ties go to the lowest neighbour slot
        nbr_arg = h.argmax(axis=2)
        point_feat = np.take_along_axis(h, nbr_arg[:, :, None, :], axis=2)[:, :, 0, :]
        z = self.layers["embed"].forward(point_feat.reshape(nb * n, cfg.edge_hidden))
        z = z.reshape(nb, n, cfg.embedding)
        pt_arg = z.argmax(axis=1)
        pooled_max = np.take_along_axis(z, pt_arg[:, None, :], axis=1)[:, 0, :]
        pooled = np.concatenate([pooled_max, z.mean(axis=1)], axis=1)
        logits = self.layers["head"].forward(pooled)
        self._cache = (graphs, nb, n, nbr_arg, pt_arg)
        return logits

    def backward(self, grad_logits) -> np.ndarray:
        """Accumulate parameter gradients; returns the gradient w.r.t. the input clouds.

        The kNN graphs from the forward pass are held fixed.
        """
        if self._cache is None:
            raise StateError("Model.backward called before forward")
        graphs, nb, n, nbr_arg, pt_arg = self._cache
        cfg = self.config
        grad_logits = as_tensor(grad_logits)
        if grad_logits.shape != (nb, cfg.num_classes):
            raise ContractError(f"logit gradient has shape {grad_logits.shape}")
        g_pooled = self.layers["head"].backward(grad_logits)
        d = cfg.embedding
        g_z = np.repeat((g_pooled[:, d:] / n)[:, None, :], n, axis=1)
        bi, di = np.meshgrid(np.arange(nb), np.arange(d), indexing="ij")
        g_z[bi, pt_arg, di] += g_pooled[:, :d]
        g_point = self.layers["embed"].backward(g_z.reshape(nb * n, d))
        g_point = g_point.reshape(nb, n, cfg.edge_hidden)
        g_h = np.zeros((nb, n, cfg.k, cfg.edge_hidden))
        np.put_along_axis(g_h, nbr_arg[:, :, None, :], g_point[:, :, None, :], axis=2)
        g_edges = self.layers["edge"].backward(g_h.reshape(nb * n * cfg.k, -1))
        g_edges = g_edges.reshape(nb, n, cfg.k, 2 * cfg.input_dim)
        return np.stack([edge_backward(g_edges[b], graphs[b]) for b in range(nb)])
