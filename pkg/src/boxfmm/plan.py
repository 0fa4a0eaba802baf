"""Evaluation plan: the handful of knobs shared by every stage."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError
from .interpolation import SchemeKind, scheme_by_name
from .octree import BoxDomain


@dataclass(frozen=True)
class FmmPlan:
    """Tree depth, interpolation order, compression tolerance, domain box.

    ``n_cols`` declares how many weight columns a caller intends to push
    through in one pass; it sizes nothing up front and evaluate accepts
    any column count, but the CLI and bindings validate against it.
    """

    levels: int
    order: int
    scheme: SchemeKind = SchemeKind.CHEBYSHEV
    eps: float = 1e-5
    domain_length: float = 1.0
    domain_center: tuple = (0.0, 0.0, 0.0)
    n_cols: int = 1

    def __post_init__(self):
        if not isinstance(self.scheme, SchemeKind):
            object.__setattr__(self, "scheme", scheme_by_name(self.scheme))
        if not (2 <= int(self.levels) <= 21):
            raise ConfigurationError(f"levels must be in [2, 21], got {self.levels}")
        if not (1 <= int(self.order) <= 12):
            raise ConfigurationError(f"interpolation order must be in [1, 12], got {self.order}")
        if not (0.0 < self.eps < 1.0):
            raise ConfigurationError(f"eps must lie in (0, 1), got {self.eps}")
        if not (self.domain_length > 0 and math.isfinite(self.domain_length)):
            raise ConfigurationError(f"domain_length must be positive, got {self.domain_length}")
        if int(self.n_cols) < 1:
            raise ConfigurationError(f"n_cols must be >= 1, got {self.n_cols}")
        c = np.asarray(self.domain_center, dtype=np.float64)
        if c.shape != (3,) or not np.all(np.isfinite(c)):
            raise ConfigurationError(f"domain_center must be 3 finite floats, got {self.domain_center}")
        object.__setattr__(self, "levels", int(self.levels))
        object.__setattr__(self, "order", int(self.order))
        object.__setattr__(self, "n_cols", int(self.n_cols))
        object.__setattr__(self, "domain_center", tuple(float(v) for v in c))

    @property
    def domain(self) -> BoxDomain:
        return BoxDomain(center=self.domain_center, length=self.domain_length)

    def cell_width(self, level: int) -> float:
        return self.domain_length / 2 ** level

    def with_domain(self, domain: BoxDomain) -> "FmmPlan":
        return replace(self, domain_length=domain.length, domain_center=domain.center)
