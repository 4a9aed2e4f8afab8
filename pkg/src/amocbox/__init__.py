"""Three-box AMOC model toolkit: continuation, Welander oscillations, chaos."""

__version__ = "0.1.0"

from ._kernels import backend_name
