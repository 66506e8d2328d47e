from .layers import (
    BatchNormPoints,
    Linear,
    MaxPoolPoints,
    Module,
    ModuleList,
    Parameter,
    ReLU,
    Sequential,
    SharedLinear,
    Tanh,
)
from .optim import adam_step, clip_grad_norm, zero_grads
from .gradcheck import GradCheckReport, check_module, max_relative_error, relative_error
from .checkpoint import load_container, load_module_state, module_state, save_container

__all__ = [
    "BatchNormPoints",
    "GradCheckReport",
    "Linear",
    "MaxPoolPoints",
    "Module",
    "ModuleList",
    "Parameter",
    "ReLU",
    "Sequential",
    "SharedLinear",
    "Tanh",
    "adam_step",
    "check_module",
    "clip_grad_norm",
    "load_container",
    "load_module_state",
    "max_relative_error",
    "module_state",
    "relative_error",
    "save_container",
    "zero_grads",
]
