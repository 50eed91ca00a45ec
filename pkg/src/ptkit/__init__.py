"""Process-tensor characterisation toolkit: simulation of multi-time open
dynamics, linear-inversion and maximum-likelihood reconstruction, memory
truncation, and model-based control."""

__version__ = "0.1.0"
