import numpy as np
import pytest

from boxfmm.errors import ConfigurationError, DomainError
from boxfmm.interpolation import (SchemeKind, child_transfer_matrices,
                                  interp_matrix_1d, interp_matrix_3d,
                                  nodes_1d, nodes_3d, scheme_by_name,
                                  to_reference)

SCHEMES = [SchemeKind.CHEBYSHEV, SchemeKind.UNIFORM]


def test_scheme_by_name():
    assert scheme_by_name("chebyshev") is SchemeKind.CHEBYSHEV
    assert scheme_by_name("uniform") is SchemeKind.UNIFORM
    assert scheme_by_name(SchemeKind.UNIFORM) is SchemeKind.UNIFORM
    with pytest.raises(ConfigurationError):
        scheme_by_name("legendre")


def test_chebyshev_nodes_are_t_p_roots():
    for p in (1, 2, 3, 5, 8):
        nodes = nodes_1d(p, SchemeKind.CHEBYSHEV)
        assert len(nodes) == p
        assert np.all(np.diff(nodes) > 0), "nodes come sorted ascending"
        # T_p vanishes at its roots
        assert np.max(np.abs(np.cos(p * np.arccos(nodes)))) < 1e-13


def test_uniform_nodes_hit_endpoints():
    nodes = nodes_1d(4, SchemeKind.UNIFORM)
    assert nodes[0] == -1.0 and nodes[-1] == 1.0
    assert np.allclose(np.diff(nodes), 2 / 3)
    assert nodes_1d(1, SchemeKind.UNIFORM).tolist() == [0.0]


def test_chebyshev_weight_closed_form():
    # the p=3 weight attached to the center node, evaluated at x=0.5:
    # 1/3 + (2/3)*(T1(0.5)*T1(0) + T2(0.5)*T2(0)) = 1/3 + (2/3)*(0.5) = 2/3
    w = interp_matrix_1d(np.array([0.5]), 3, SchemeKind.CHEBYSHEV)
    nodes = nodes_1d(3, SchemeKind.CHEBYSHEV)
    center = int(np.argmin(np.abs(nodes)))
    assert w[0, center] == pytest.approx(2 / 3, abs=1e-14)


@pytest.mark.parametrize("scheme", SCHEMES)
def test_partition_of_unity(scheme, rng):
    x = rng.uniform(-1, 1, size=50)
    for p in (1, 2, 4, 7):
        w = interp_matrix_1d(x, p, scheme)
        assert np.max(np.abs(w.sum(axis=1) - 1.0)) < 1e-12


@pytest.mark.parametrize("scheme", SCHEMES)
def test_interpolation_reproduces_polynomials(scheme, rng):
    """Degree < p polynomials pass through exactly, the workhorse identity."""
    x = rng.uniform(-1, 1, size=40)
    for p in (2, 3, 5):
        nodes = nodes_1d(p, scheme)
        w = interp_matrix_1d(x, p, scheme)
        for deg in range(p):
            err = np.max(np.abs(w @ nodes ** deg - x ** deg))
            assert err < 1e-12, f"p={p} degree={deg}"


def test_interp_matrix_rejects_far_outside():
    with pytest.raises(DomainError):
        interp_matrix_1d(np.array([1.5]), 3, SchemeKind.CHEBYSHEV)
    # a hair beyond 1.0 is treated as roundoff, not an error
    w = interp_matrix_1d(np.array([1.0 + 5e-13]), 3, SchemeKind.CHEBYSHEV)
    assert np.isfinite(w).all()


def test_nodes_3d_layout():
    p = 3
    grid = nodes_3d(p, SchemeKind.UNIFORM)
    assert grid.shape == (27, 3)
    one_d = nodes_1d(p, SchemeKind.UNIFORM)
    # z varies fastest: consecutive rows differ in z only
    assert grid[0, 2] == one_d[0] and grid[1, 2] == one_d[1]
    assert np.all(grid[0, :2] == grid[1, :2])
    # flattened index (i*p + j)*p + k
    i, j, k = 2, 0, 1
    row = (i * p + j) * p + k
    assert np.allclose(grid[row], [one_d[i], one_d[j], one_d[k]])


def test_nodes_3d_scaling():
    grid = nodes_3d(2, SchemeKind.UNIFORM, center=(1.0, 2.0, 3.0), half_width=0.5)
    assert grid.min(axis=0).tolist() == [0.5, 1.5, 2.5]
    assert grid.max(axis=0).tolist() == [1.5, 2.5, 3.5]


@pytest.mark.parametrize("scheme", SCHEMES)
def test_interp_matrix_3d_is_tensor_product(scheme, rng):
    pts = rng.uniform(-1, 1, size=(10, 3))
    p = 3
    w3 = interp_matrix_3d(pts, p, scheme)
    assert w3.shape == (10, p ** 3)
    wx = interp_matrix_1d(pts[:, 0], p, scheme)
    wy = interp_matrix_1d(pts[:, 1], p, scheme)
    wz = interp_matrix_1d(pts[:, 2], p, scheme)
    for n in (0, 7):
        for (i, j, k) in [(0, 0, 0), (1, 2, 0), (2, 2, 2)]:
            expect = wx[n, i] * wy[n, j] * wz[n, k]
            assert w3[n, (i * p + j) * p + k] == pytest.approx(expect, abs=1e-15)


def test_to_reference_round_trip(rng):
    center = np.array([0.3, -1.0, 2.0])
    half = 0.25
    ref = rng.uniform(-1, 1, size=(20, 3))
    pts = center + half * ref
    back = to_reference(pts, center, half)
    assert np.max(np.abs(back - ref)) < 1e-12
    with pytest.raises(DomainError):
        to_reference(center + np.array([[0.3, 0.0, 0.0]]), center, half)


@pytest.mark.parametrize("scheme", SCHEMES)
def test_child_transfer_reproduces_parent_anterpolation(scheme, rng):
    """Child-to-parent moment transfer must match direct anterpolation for
    smooth data: both sides integrate the same degree < p polynomial space."""
    p = 4
    transfers = child_transfer_matrices(p, scheme)
    assert transfers.shape == (8, p ** 3, p ** 3)
    # take points inside child octant 5 -> (ix, iy, iz) = (1, 0, 1)
    pts_ref = rng.uniform(-1, 1, size=(30, 3))  # in child coords
    child_center = np.array([0.5, -0.5, 0.5])
    pts_parent = child_center + 0.5 * pts_ref  # same points in parent coords
    w = rng.standard_normal(30)

    child_m = interp_matrix_3d(pts_ref, p, scheme).T @ w
    via_transfer = transfers[5] @ child_m
    direct = interp_matrix_3d(pts_parent, p, scheme).T @ w
    assert np.max(np.abs(via_transfer - direct)) < 1e-12


def test_order_lower_bound():
    with pytest.raises(ConfigurationError):
        nodes_1d(0, SchemeKind.CHEBYSHEV)
