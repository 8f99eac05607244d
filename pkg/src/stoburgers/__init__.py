"""Spectral Galerkin simulation and Monte Carlo estimators for the 1-D
stochastic Burgers equation with Dirichlet boundary conditions."""

__version__ = "0.1.0"

from .kernels import BACKEND
from .spectral import BasisSpec
from .dynamics import SimConfig

__all__ = ["BACKEND", "BasisSpec", "SimConfig", "__version__"]
