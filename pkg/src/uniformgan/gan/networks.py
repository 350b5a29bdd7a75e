from __future__ import annotations

import numpy as np

from ..numerics import ParameterSet, Rng
from ..numerics import autodiff as ad
from ..numerics.autodiff import Node
from ..regularizers import FeatureBatch

ACTIVATIONS = {
    "tanh": ad.tanh,
    "relu": ad.relu,
    "leaky_relu": ad.leaky_relu,
    "sigmoid": ad.sigmoid,
    "linear": lambda x: x,
}


class MlpNetwork:
    """Fully connected network; hidden layers share one activation, the last layer has its own.

    ``dims = [in, h1, ..., hk, out]``. Weights ``W{i}`` are ``dims[i] x dims[i+1]``
    and biases ``b{i}`` are row vectors, so a batch is an M x dims[0] matrix.
    """

    def __init__(self, dims, rng: Rng, activation: str = "tanh", final_activation: str = "linear", prefix: str = ""):
        dims = [int(d) for d in dims]
        if len(dims) < 2 or min(dims) < 1:
            raise ValueError(f"invalid layer dimensions {dims}")
        for tag in (activation, final_activation):
            if tag not in ACTIVATIONS:
                raise ValueError(f"unknown activation {tag!r}")
        self.dims = dims
        self.activation = activation
        self.final_activation = final_activation
        self.params = ParameterSet()
        gain = 2.0 if activation == "relu" else 1.0
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            w = rng.normal(fan_in, fan_out) * np.sqrt(gain / fan_in)
            self.params.add(f"{prefix}W{i}", w)
            self.params.add(f"{prefix}b{i}", np.zeros((1, fan_out)))
        self._prefix = prefix

    @property
    def n_hidden(self) -> int:
        return len(self.dims) - 2

    def weight(self, i: int) -> Node:
        return self.params[f"{self._prefix}W{i}"]

    def bias(self, i: int) -> Node:
        return self.params[f"{self._prefix}b{i}"]

    def forward(self, x) -> tuple[Node, list[Node]]:
        """Return the output node and the post-activation node of every hidden layer."""
        h = x if isinstance(x, Node) else ad.constant(x)
        if h.shape[1] != self.dims[0]:
            raise ad.ShapeError(f"network expects {self.dims[0]} input columns, got {h.shape}")
        hidden = []
        n_layers = len(self.dims) - 1
        act = ACTIVATIONS[self.activation]
        for i in range(n_layers):
            h = ad.add(ad.matmul(h, self.weight(i)), self.bias(i))
            if i < n_layers - 1:
                h = act(h)
                hidden.append(h)
        return ACTIVATIONS[self.final_activation](h), hidden

    def __call__(self, x) -> Node:
        return self.forward(x)[0]

    def predict(self, x: np.ndarray) -> np.ndarray:
        with ad.no_grad():
            return self.forward(x)[0].value


def feature_tap(network: MlpNetwork, layer_index: int, input_batch) -> FeatureBatch:
    """Post-activation values of hidden layer ``layer_index`` (0-based) for the batch."""
    if not 0 <= layer_index < network.n_hidden:
        raise IndexError(f"tap layer {layer_index} outside [0, {network.n_hidden})")
    _, hidden = network.forward(input_batch)
    return FeatureBatch(hidden[layer_index], layer_id=layer_index)


def tap_from_forward(hidden: list[Node], layer_index: int) -> FeatureBatch:
    if not 0 <= layer_index < len(hidden):
        raise IndexError(f"tap layer {layer_index} outside [0, {len(hidden)})")
    return FeatureBatch(hidden[layer_index], layer_id=layer_index)
