from . import tensor
from .gradcheck import GradCheckReport, grad_check, grad_check_many
from .nn import (BiLstmParams, Layer, LstmCell, MlpParams, affine, bilstm_forward,
                 bilstm_forward_padded, uniform_init)
from .tensor import (DimensionError, NonFiniteError, Tensor, cosine_sim, set_checked, softmax)

__all__ = [
    "tensor", "GradCheckReport", "grad_check", "grad_check_many", "BiLstmParams", "Layer", "LstmCell", "MlpParams",
    "affine", "bilstm_forward", "bilstm_forward_padded", "uniform_init", "DimensionError",
    "NonFiniteError", "Tensor", "cosine_sim", "set_checked", "softmax",
]
