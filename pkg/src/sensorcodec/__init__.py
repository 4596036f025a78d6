"""Learned compression of windowed inertial sensor data with autoencoders."""

from ._kernels import backend
from .tensor import NumericError, Tape, Tensor, backward

__version__ = "0.1.0"

__all__ = ["NumericError", "Tape", "Tensor", "backend", "backward"]
