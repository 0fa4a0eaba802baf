"""Polynomial interpolation on the reference cube [-1, 1]^3.

Two node families are supported:

* ``chebyshev``: roots of the degree-p Chebyshev polynomial.  Weights come
  from the closed-form sum S_p(x, y) = 1/p + (2/p) sum_{n=1}^{p-1} T_n(x) T_n(y),
  which is the Lagrange basis for these nodes.
* ``uniform``: p equispaced points including the endpoints.  Weights are
  plain Lagrange basis polynomials.  Equispaced nodes make the far-field
  translation tables Toeplitz in each axis, which is what the FFT
  application path relies on.

3D grids are tensor products with the z index fastest: flat index
a = (i*p + j)*p + k addresses node (x_i, y_j, z_k).  Child octants are
numbered o = (ix << 2) | (iy << 1) | iz, bit 0 meaning the negative half
of an axis, matching the octree's child ordering.
"""

from __future__ import annotations

import enum

import numpy as np

from .errors import ConfigurationError, DomainError

#: How far outside the reference interval a mapped point may fall before we
#: call it a tree-assignment bug rather than roundoff.
_EDGE_TOL = 1e-12


class SchemeKind(str, enum.Enum):
    CHEBYSHEV = "chebyshev"
    UNIFORM = "uniform"


def scheme_by_name(name) -> SchemeKind:
    if isinstance(name, SchemeKind):
        return name
    try:
        return SchemeKind(str(name).lower())
    except ValueError:
        raise ConfigurationError(
            f"unknown interpolation scheme {name!r}; use 'chebyshev' or 'uniform'") from None


def nodes_1d(p: int, scheme: SchemeKind) -> np.ndarray:
    """Interpolation nodes on [-1, 1], ascending."""
    if p < 1:
        raise ConfigurationError(f"interpolation order must be >= 1, got {p}")
    if p == 1:
        return np.zeros(1)
    if scheme is SchemeKind.CHEBYSHEV:
        k = np.arange(p, 0, -1)
        return np.cos(np.pi * (2 * k - 1) / (2 * p))
    return np.linspace(-1.0, 1.0, p)


def _chebyshev_basis(x: np.ndarray, p: int) -> np.ndarray:
    """T_n(x) for n = 0..p-1; rows indexed by n, columns by point."""
    theta = np.arccos(np.clip(x, -1.0, 1.0))
    n = np.arange(p)
    return np.cos(np.outer(n, theta))


def interp_matrix_1d(x, p: int, scheme: SchemeKind) -> np.ndarray:
    """Weights W[i, j] of node j in the interpolant evaluated at x[i].

    Rows sum to 1 and the matrix reproduces polynomials of degree < p
    exactly.  Points must lie in [-1, 1] up to roundoff.
    """
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.size and np.max(np.abs(x)) > 1.0 + _EDGE_TOL:
        worst = x[np.argmax(np.abs(x))]
        raise DomainError(f"interpolation point {worst} outside [-1, 1]")
    nodes = nodes_1d(p, scheme)
    if scheme is SchemeKind.CHEBYSHEV:
        phi_x = _chebyshev_basis(x, p)
        phi_n = _chebyshev_basis(nodes, p)
        scale = np.full(p, 2.0 / p)
        scale[0] = 1.0 / p
        return phi_x.T @ (scale[:, None] * phi_n)
    # Lagrange basis by direct products; node spacing keeps this stable for
    # the small p used here, and hitting a node exactly yields exact 0/1.
    w = np.ones((x.size, p))
    for j in range(p):
        for k in range(p):
            if k != j:
                w[:, j] *= (x - nodes[k]) / (nodes[j] - nodes[k])
    return w


def nodes_3d(p: int, scheme: SchemeKind, center=None, half_width: float = 1.0) -> np.ndarray:
    """Tensor grid of p**3 nodes, z fastest; optionally scaled to a cell."""
    n = nodes_1d(p, scheme)
    gx, gy, gz = np.meshgrid(n, n, n, indexing="ij")
    grid = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    if center is not None:
        grid = np.asarray(center, dtype=np.float64) + half_width * grid
    elif half_width != 1.0:
        grid = half_width * grid
    return grid


def to_reference(points, center, half_width: float) -> np.ndarray:
    """Map physical points into a cell's [-1, 1]^3 frame, checking bounds."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    ref = (pts - np.asarray(center, dtype=np.float64)) / half_width
    if ref.size and np.max(np.abs(ref)) > 1.0 + _EDGE_TOL:
        i = np.argmax(np.max(np.abs(ref), axis=1))
        raise DomainError(
            f"point {pts[i]} lies outside the cell with center {center} "
            f"and half width {half_width}")
    return ref


def interp_matrix_3d(points, p: int, scheme: SchemeKind, center=None,
                     half_width: float = 1.0) -> np.ndarray:
    """Row a = (i*p + j)*p + k holds the weight of node (x_i, y_j, z_k).

    The same matrix serves both directions: transposed it spreads point
    weights onto the node grid, untransposed it interpolates node values
    back at the points.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if center is not None or half_width != 1.0:
        pts = to_reference(pts, center if center is not None else (0.0, 0.0, 0.0),
                           half_width)
    wx = interp_matrix_1d(pts[:, 0], p, scheme)
    wy = interp_matrix_1d(pts[:, 1], p, scheme)
    wz = interp_matrix_1d(pts[:, 2], p, scheme)
    w = wx[:, :, None, None] * wy[:, None, :, None] * wz[:, None, None, :]
    return w.reshape(pts.shape[0], p ** 3)


def child_transfer_matrices(p: int, scheme: SchemeKind) -> np.ndarray:
    """Per-octant node transfer matrices T of shape (8, p**3, p**3).

    T[o][a, b] is the weight of the parent node a in the parent-frame
    interpolant evaluated at child o's node b.  The upward pass merges
    child coefficients with M_parent += T[o] @ M_child; the downward pass
    pushes local coefficients with l_child += T[o].T @ l_parent.
    """
    nodes = nodes_1d(p, scheme)
    half = {}
    for sign in (-1.0, 1.0):
        child_pts = 0.5 * sign + 0.5 * nodes
        half[sign] = interp_matrix_1d(child_pts, p, scheme).T
    out = np.empty((8, p ** 3, p ** 3))
    for o in range(8):
        sx = 1.0 if (o >> 2) & 1 else -1.0
        sy = 1.0 if (o >> 1) & 1 else -1.0
        sz = 1.0 if o & 1 else -1.0
        out[o] = np.kron(half[sx], np.kron(half[sy], half[sz]))
    return out
