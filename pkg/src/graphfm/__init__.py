"""Multi-graph multi-task pretraining with a latent-token graph compressor."""

from .tensor import Tensor, no_grad
from .nn import ParamStore, attention, transformer_block, score_counter
from .gradcheck import grad_check

__all__ = [
    "Tensor",
    "no_grad",
    "ParamStore",
    "attention",
    "transformer_block",
    "score_counter",
    "grad_check",
]

__version__ = "0.1.0"
