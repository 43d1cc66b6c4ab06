"""shrinknet: lightweight dual-path residual shrinkage network for
automatic modulation classification, built on a from-scratch autodiff
engine, with synthetic I/Q dataset tooling and a training/eval harness."""

from .tensor import Tensor, set_default_dtype, get_default_dtype, no_grad
from .model import Model, ModelConfig
from .signals import DatasetSpec, MODULATION_CLASSES
from .sigset import read_sigset, write_sigset, build_dataset

__all__ = [
    "Tensor", "set_default_dtype", "get_default_dtype", "no_grad",
    "Model", "ModelConfig", "DatasetSpec", "MODULATION_CLASSES",
    "read_sigset", "write_sigset", "build_dataset",
]

__version__ = "0.1.0"
