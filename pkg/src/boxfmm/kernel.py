"""Kernel contract and built-in kernels.

A kernel is anything that can be evaluated numerically at a pair of 3D
points, together with two pieces of metadata the solver exploits:

* ``homogen``: the degree m such that K(a*x, a*y) = a**m * K(x, y) for
  a > 0, or 0 for inhomogeneous kernels.  Homogeneous kernels need their
  far-field translation operators built at a single reference scale only.
* ``symmetry``: 1 for K(x, y) = K(y, x), -1 for antisymmetric, 0 otherwise.

Built-in singular kernels (1/r, log r, 1/r^4) return 0 at coincident
points: a point's interaction with itself carries no contribution to the
summed potential, and the solver needs a finite value there.  Custom
kernels must pick (and document) their own convention.

Translation operators are shared between all cell pairs at the same
relative offset, so kernels are assumed translation invariant,
K(x, y) = g(x - y).  Every built-in is radial, g(x - y) = f(|x - y|).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import ConfigurationError, KernelEvaluationError


class Point3(NamedTuple):
    """A point in the 3D simulation box."""

    x: float
    y: float
    z: float

    def as_array(self):
        return np.array(self, dtype=np.float64)


def as_point_array(p) -> np.ndarray:
    """Coerce a Point3 / sequence of 3 floats to a finite float64 array."""
    a = np.asarray(p, dtype=np.float64)
    if a.shape != (3,):
        raise ValueError(f"expected a 3D point, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"point has non-finite coordinates: {a}")
    return a


@dataclass(frozen=True)
class KernelSpec:
    """A black-box kernel: numerical evaluation plus homogeneity/symmetry.

    Exactly one of the evaluation hooks should be set, in decreasing order
    of preference:

    profile
        Vectorized radial profile f(r), applied to arrays of pairwise
        distances.  The fast path; all built-ins use it.
    diff_func
        Vectorized g(dx, dy, dz) on coordinate-difference arrays, for
        translation-invariant but non-radial kernels.
    pair_func
        Scalar K(x, y) on two length-3 arrays.  Slow fallback; evaluation
        loops over pairs in Python.
    """

    name: str
    homogen: float = 0.0
    symmetry: int = 0
    profile: Optional[Callable[[np.ndarray], np.ndarray]] = None
    diff_func: Optional[Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]] = None
    pair_func: Optional[Callable[[np.ndarray, np.ndarray], float]] = None

    def __post_init__(self):
        if not self.name:
            raise ConfigurationError("kernels need a nonempty name (it keys the operator cache)")
        if self.profile is None and self.diff_func is None and self.pair_func is None:
            raise ConfigurationError(f"kernel {self.name!r} defines no evaluation hook")
        if self.symmetry not in (-1, 0, 1):
            raise ConfigurationError(f"kernel {self.name!r}: symmetry must be -1, 0, or 1")

    def evaluate(self, x, y) -> float:
        """K(x, y) for a single pair; raises if the result is not finite."""
        xa = as_point_array(x)
        ya = as_point_array(y)
        if self.profile is not None:
            d = xa - ya
            v = float(self.profile(np.sqrt(d @ d)))
        elif self.diff_func is not None:
            d = xa - ya
            v = float(self.diff_func(d[0], d[1], d[2]))
        else:
            v = float(self.pair_func(xa, ya))
        if not math.isfinite(v):
            raise KernelEvaluationError(
                f"kernel {self.name!r} returned {v!r} at x={tuple(xa)}, y={tuple(ya)}",
                x=xa, y=ya)
        return v

    def values_from_diffs(self, dx, dy, dz) -> np.ndarray:
        """Vectorized kernel values from coordinate-difference arrays."""
        if self.profile is not None:
            return self.profile(np.sqrt(dx * dx + dy * dy + dz * dz))
        if self.diff_func is not None:
            return self.diff_func(dx, dy, dz)
        raise ConfigurationError(
            f"kernel {self.name!r} is not translation invariant; "
            "difference-grid evaluation is unavailable")

    def block(self, X, Y) -> np.ndarray:
        """Dense kernel matrix K[i, j] = K(X[i], Y[j]) for point arrays."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
        if self.profile is not None or self.diff_func is not None:
            dx = X[:, 0, None] - Y[None, :, 0]
            dy = X[:, 1, None] - Y[None, :, 1]
            dz = X[:, 2, None] - Y[None, :, 2]
            return self.values_from_diffs(dx, dy, dz)
        out = np.empty((X.shape[0], Y.shape[0]))
        for i, xi in enumerate(X):
            for j, yj in enumerate(Y):
                out[i, j] = self.pair_func(xi, yj)
        return out

    @property
    def is_homogeneous(self) -> bool:
        return self.homogen != 0.0


def homogeneity_scale(kernel: KernelSpec, alpha: float) -> float:
    """Rescaling factor alpha**m for an operator built at a reference scale.

    Only meaningful for homogeneous kernels; calling this on an
    inhomogeneous kernel is a usage bug.
    """
    if not kernel.is_homogeneous:
        raise ConfigurationError(
            f"kernel {kernel.name!r} is inhomogeneous; operators must be "
            "built per level instead of rescaled")
    if alpha <= 0:
        raise ConfigurationError(f"scale factor must be positive, got {alpha}")
    return alpha ** kernel.homogen


def _laplacian_profile(r):
    with np.errstate(divide="ignore"):
        v = np.reciprocal(np.asarray(r, dtype=np.float64))
    return np.where(np.asarray(r) == 0.0, 0.0, v)


def _laplacian_force_profile(r):
    r = np.asarray(r, dtype=np.float64)
    with np.errstate(divide="ignore"):
        v = np.reciprocal(r * r * r * r)
    return np.where(r == 0.0, 0.0, v)


def _logarithm_profile(r):
    r = np.asarray(r, dtype=np.float64)
    with np.errstate(divide="ignore"):
        v = np.log(r)
    return np.where(r == 0.0, 0.0, v)


LAPLACIAN = KernelSpec("laplacian", homogen=-1.0, symmetry=1, profile=_laplacian_profile)
EXPONENTIAL = KernelSpec("exponential", homogen=0.0, symmetry=1,
                         profile=lambda r: np.exp(-np.asarray(r, dtype=np.float64)))
GAUSSIAN = KernelSpec("gaussian", homogen=0.0, symmetry=1,
                      profile=lambda r: np.exp(-np.square(np.asarray(r, dtype=np.float64))))
LAPLACIAN_FORCE = KernelSpec("laplacianforce", homogen=-4.0, symmetry=1,
                             profile=_laplacian_force_profile)
LOGARITHM = KernelSpec("logarithm", homogen=0.0, symmetry=1, profile=_logarithm_profile)

BUILTIN_KERNELS = {
    k.name: k for k in (LAPLACIAN, EXPONENTIAL, GAUSSIAN, LAPLACIAN_FORCE, LOGARITHM)
}


def kernel_by_name(name: str) -> KernelSpec:
    """Look up a built-in kernel by its CLI/config name."""
    if name == "custom":
        raise ConfigurationError(
            "custom kernels are passed as a KernelSpec through the library "
            "API; the name 'custom' cannot be resolved from a string")
    try:
        return BUILTIN_KERNELS[name]
    except KeyError:
        known = ", ".join(sorted(BUILTIN_KERNELS))
        raise ConfigurationError(f"unknown kernel {name!r}; built-ins: {known}") from None
