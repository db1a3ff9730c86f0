"""Differentiable surrogates: exact GPR and a small ReLU network."""
from ._data import Dataset, Normalizer, support_query_split
from ._fit import fit_params, loss, loss_and_grad, loss_grad, predict
from ._params import (
    GPR,
    NN,
    Prediction,
    SurrogateParams,
    default_gpr_params,
    gpr_params,
    init_mlp_params,
    mlp_param_count,
)
from .estimators import GPRSurrogate, MLPSurrogate
from .model import FittedSurrogate
from .gpr import (
    SingularCovarianceError,
    gpr_loss,
    gpr_loss_and_grad,
    gpr_loss_grad,
    gpr_loss_hessian,
    gpr_predict,
)
from .mlp import nn_loss, nn_loss_and_grad, nn_loss_grad, nn_predict

__all__ = [
    "Dataset",
    "Normalizer",
    "support_query_split",
    "fit_params",
    "loss",
    "loss_and_grad",
    "loss_grad",
    "predict",
    "GPR",
    "NN",
    "Prediction",
    "SurrogateParams",
    "default_gpr_params",
    "gpr_params",
    "init_mlp_params",
    "mlp_param_count",
    "GPRSurrogate",
    "FittedSurrogate",
    "MLPSurrogate",
    "SingularCovarianceError",
    "gpr_loss",
    "gpr_loss_and_grad",
    "gpr_loss_grad",
    "gpr_loss_hessian",
    "gpr_predict",
    "nn_loss",
    "nn_loss_and_grad",
    "nn_loss_grad",
    "nn_predict",
]
