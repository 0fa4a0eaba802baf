"""boxfmm: kernel-independent fast multipole summation in 3D.

Computes potentials phi[i] = sum_j K(x_i, y_j) w[j] for smooth radial
kernels in O(N) by low-order polynomial interpolation on an octree, with
a randomized eigensolver for covariance matrices on top of the fast
matvec.  The kernel enters only through point evaluations, so any
non-oscillatory decaying kernel works unchanged.
"""

from .engine import FmmEvaluator, direct_evaluate, evaluate
from .errors import (ConfigurationError, DomainError, FileFormatError,
                     KernelEvaluationError)
from .interpolation import SchemeKind, scheme_by_name
from .kernel import (BUILTIN_KERNELS, EXPONENTIAL, GAUSSIAN, LAPLACIAN,
                     LAPLACIAN_FORCE, LOGARITHM, KernelSpec, Point3,
                     homogeneity_scale, kernel_by_name)
from .linops import (EigenResult, direct_matvec, evaluator_matvec,
                     randomized_eig)
from .octree import BoxDomain, Octree, suggest_levels
from .operators import (M2LTable, apply_m2l, dense_m2l, offset_set,
                        precompute_m2l)
from .plan import FmmPlan

__version__ = "0.1.0"

__all__ = [
    "BUILTIN_KERNELS", "BoxDomain", "ConfigurationError", "DomainError",
    "EXPONENTIAL", "EigenResult", "FileFormatError", "FmmEvaluator",
    "FmmPlan", "GAUSSIAN", "KernelEvaluationError", "KernelSpec",
    "LAPLACIAN", "LAPLACIAN_FORCE", "LOGARITHM", "M2LTable", "Octree",
    "Point3", "SchemeKind", "apply_m2l", "dense_m2l", "direct_evaluate",
    "direct_matvec", "evaluate", "evaluator_matvec", "homogeneity_scale",
    "kernel_by_name", "offset_set", "precompute_m2l", "randomized_eig",
    "scheme_by_name", "suggest_levels",
]
