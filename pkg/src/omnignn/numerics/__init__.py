"""Dense float64 substrate: tensors with a reverse-mode tape, layers, Adam, PCA."""
from .adam import AdamConfig, AdamState, adam_step
from .ops import (EmptyAttentionRow, dropout, gelu, layer_norm, leaky_relu, linear,
                  masked_softmax, mse)
from .pca import PCABasis, pca_fit, pca_fit_transform
from .tensor import (NonFiniteError, ShapeError, Tape, Tensor, add, as_tensor, backward,
                     concat, div, exp, log, matmul, mean, mul, power, reshape, sqrt, stack,
                     sub, swapaxes, take, tanh, transpose, tsum, where)

__all__ = [
    "AdamConfig", "AdamState", "adam_step",
    "EmptyAttentionRow", "dropout", "gelu", "layer_norm", "leaky_relu", "linear",
    "masked_softmax", "mse",
    "PCABasis", "pca_fit", "pca_fit_transform",
    "NonFiniteError", "ShapeError", "Tape", "Tensor", "add", "as_tensor", "backward",
    "concat", "div", "exp", "log", "matmul", "mean", "mul", "power", "reshape", "sqrt",
    "stack", "sub", "swapaxes", "take", "tanh", "transpose", "tsum", "where",
]
