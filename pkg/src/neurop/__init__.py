"""Operator-learning engine: explicit and weight-tied implicit Fourier
neural operators, a Darcy-flow data pipeline, and a benchmark harness."""

from .errors import InvalidArgumentError, NeuropError, NumericalFailureError
from .grid import GridField2D, SpectralTensor, fft2_truncated, ifft2_from_truncated, zero_pad_boundary
from .randfield import RngStream

__all__ = [
    "GridField2D",
    "SpectralTensor",
    "RngStream",
    "NeuropError",
    "InvalidArgumentError",
    "NumericalFailureError",
    "fft2_truncated",
    "ifft2_from_truncated",
    "zero_pad_boundary",
]

__version__ = "0.1.0"
