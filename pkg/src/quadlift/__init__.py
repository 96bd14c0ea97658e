"""Cooperative rigid-payload transport by four quadrotors on elastic cables."""

from .params import PhysicalParams
from .state import ControlInput, FullState, ReducedState

__all__ = [
    "PhysicalParams",
    "FullState",
    "ReducedState",
    "ControlInput",
]

__version__ = "0.1.0"
