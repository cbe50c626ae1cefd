# Engine package
from src.engine.tensor import Tensor, backward, get_dtype, precision, set_precision
from src.engine.optim import AdamState, LrSchedule, adam_step, lr_at

__all__ = [
    "Tensor",
    "backward",
    "get_dtype",
    "precision",
    "set_precision",
    "AdamState",
    "LrSchedule",
    "adam_step",
    "lr_at",
]
