"""Approximate synthesis of 2- and 3-qubit unitaries over a CZ + RZ/SX
instruction set: learned template selection, learned parameter suggestion
through a fixed differentiable decoder, and gradient-descent refinement."""

__version__ = "0.1.0"

from . import gradsim, neural, qmat, synth, tasks, templates  # noqa: E402,F401
