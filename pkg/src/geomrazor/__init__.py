"""Geometric complexity measures and gradient-norm checks for small MLPs."""

from ._accel import backend
from .complexity import (
    Box,
    ComplexityReport,
    Dataset,
    Grid1D,
    Hull,
    Interval,
    MonteCarlo,
    arc_length_1d,
    chord_path_length,
    continuous_dirichlet_energy,
    discrete_dirichlet_energy,
    graph_volume,
    polytope_from_data,
    taylor_decomposition,
)
from .linalg import frobenius_norm_sq, spectral_norm
from .network import Activation, Layer, Mlp, forward, init_mlp, input_jacobian, parameter_gradients
from .theorem import check_theorem, check_theorem_batch
from .training import LossKind, TrainConfig, igr_penalty, loss_value, sgd_train

__version__ = "0.1.0"
