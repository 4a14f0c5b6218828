"""Asymptotics of parameter-dependent linear ODE boundary-value problems by diagonalization.

Modules:

``linalg``     small dense complex linear algebra (Jacobi eigensolver, norms, solves)
``gridfn``     functions of ``t`` sampled on a uniform grid, norms, smoothing
``frame``      block-diagonal compression, frames and the Riesz transformer
``bvp``        two-point problems: fundamental matrix, direct and contraction solves
``asympt``     families with a large parameter and their diagonal models
``companion``  companion systems, Vandermonde diagonalization, Birkhoff terms
``exprparse``  expressions in ``t`` with symbolic derivatives
``cli``        the ``asymdiag`` command
"""

from ._accel import backend
from .gridfn import GridFn

__version__ = "0.1.0"

__all__ = ["GridFn", "backend", "__version__"]
