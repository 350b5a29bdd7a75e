from . import autodiff
from .autodiff import (
    Node,
    ShapeError,
    backward,
    constant,
    grad,
    graph_eval,
    no_grad,
    parameter,
)
from .params import Adam, ParameterSet, finite_diff_check
from .rng import Rng, sample_normal, sample_uniform_sphere

__all__ = [
    "Adam",
    "Node",
    "ParameterSet",
    "Rng",
    "ShapeError",
    "autodiff",
    "backward",
    "constant",
    "finite_diff_check",
    "grad",
    "graph_eval",
    "no_grad",
    "parameter",
    "sample_normal",
    "sample_uniform_sphere",
]
