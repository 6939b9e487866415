from .checkpoint import FORMAT_VERSION, load_checkpoint, save_checkpoint
from .gradcheck import GradCheckReport, grad_check
from .model import (
    BLOCK3_AND_HEAD_TENSORS,
    HEAD_TENSORS,
    TENSOR_NAMES,
    ForwardTrace,
    Gradients,
    RnaParams,
    backward,
    forward,
    init_params,
    kl_batchmean_loss,
    predict,
)

__all__ = [
    'FORMAT_VERSION',
    'load_checkpoint',
    'save_checkpoint',
    'GradCheckReport',
    'grad_check',
    'BLOCK3_AND_HEAD_TENSORS',
    'HEAD_TENSORS',
    'TENSOR_NAMES',
    'ForwardTrace',
    'Gradients',
    'RnaParams',
    'backward',
    'forward',
    'init_params',
    'kl_batchmean_loss',
    'predict',
]
