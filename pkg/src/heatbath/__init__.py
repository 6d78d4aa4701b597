"""Hamiltonian oscillator coupled to a transport heat bath.

Submodules
----------
model      system definition and shared Hamiltonians
dilation   bath basis functions and the compression property
ou         exact Ornstein-Uhlenbeck sampling of the projected bath
micro      grid simulation of oscillator + bath
macrodyn   coarse-grained ODE/SDE for (z, w, e)
generic    GENERIC building blocks and axiom checks
ensemble   invariant measures and microcanonical statistics
cli        command-line front end
"""
__version__ = "0.1.0"

from .errors import HeatBathError  # noqa: E402,F401
from .kernels import BACKEND  # noqa: E402,F401
from .model import SystemSpec, build_derived, running_example  # noqa: E402,F401
