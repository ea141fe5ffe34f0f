"""Solver and numerical verifier for the homogeneous k-Hessian Dirichlet
problem on punctured star-shaped domains.

Subpackages:

* ``symfunc``   - algebra of elementary symmetric functions of Hessian
  eigenvalues (S_k, S_k^{ij}, Gamma_k cone).
* ``geometry``  - star-shaped domain descriptions, annular cut-cell grids,
  exact boundary curvatures.
* ``discretize``- finite-difference Hessian/gradient operators on the grid.
* ``barriers``  - explicit sub/supersolution profiles and the regularized
  maximum used to splice them, with certification of their defining bounds.
* ``radial``    - closed-form radial solutions (the 1D reduction oracle).
* ``solver``    - damped Newton solver and (epsilon, r) continuation.
* ``levelset``  - isosurface extraction and level-set curvature integrals.
* ``analysis``  - decay estimates, gradient maximum principle, monotonicity
  scans and the weighted boundary inequality.
* ``pipeline``  - config-driven experiment runner; ``cli`` - command line.
"""

__version__ = "0.1.0"
