"""Scattering resonances of radial step potentials in odd dimensions.

Closed-form half-integer Bessel functions, an argument-principle resonance
solver, Nystrom discretizations of the Birman-Schwinger operator and
finite-window growth fits.
"""

__version__ = "0.1.0"

from .specfun import HalfIntOrder, cylinder_h1, cylinder_j, modified_IK, spherical_h1, spherical_j  # noqa: E402
from .resonance_solver import (  # noqa: E402
    PotentialSpec,
    Resonance,
    ResonanceSet,
    SearchRegion,
    find_mode_resonances,
    find_resonances,
    mode_determinant,
    mode_multiplicity,
    mode_smatrix,
    sdet_log_derivative,
)
from .birman_schwinger import (  # noqa: E402
    RadialPotential,
    det_zero_crosscheck,
    domination_check,
    fredholm_det,
    mode_eigenvalues,
    mode_kernel,
    ray_limit_check,
)
from .growth import (  # noqa: E402
    canonical_factor,
    canonical_product,
    convergence_exponent,
    counting_function,
    order_fit,
)
