import numpy as np
import pytest
import scipy.interpolate as si
import scipy.io
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from iga_mg import assembly
from iga_mg.assembly import (
    assemble_1d,
    assemble_2d_mapped,
    assemble_2d_parametric,
    assemble_rhs_1d,
    assemble_rhs_2d,
    gauss_legendre_rule,
    interior_stencil,
    mass_stencil,
    stiffness_stencil,
)
from iga_mg.splines import GeometryMap, KnotVector, SplineSpace, collocation_matrix, quarter_annulus_geometry


def unit_square_map(scale=1.0, flip=False):
    kv = KnotVector(1, [0, 0, 1, 1])
    cp = scale * np.array([[[0, 0], [0, 1]], [[1, 0], [1, 1]]], dtype=float)
    if flip:
        cp = cp[:, ::-1]
    return GeometryMap(kv, kv, cp, np.ones((2, 2)))


def cardinal_stiffness(p, q=24):
    """a_j = int N'(x) N'(x - j) for the cardinal B-spline on [0, p+1], by Gauss quadrature."""
    N = si.BSpline.basis_element(np.arange(p + 2), extrapolate=False).derivative()
    t, w = np.polynomial.legendre.leggauss(q)
    t, w = 0.5 * (t + 1), 0.5 * w
    out = []
    for j in range(p + 1):
        s = 0.0
        for k in range(j, p + 1):  # unit intervals of the overlap [j, p+1]
            x = k + t
            s += np.sum(w * N(x) * N(x - j))
        out.append(s)
    return np.array(out)


# --- quadrature -----------------------------------------------------------------------


def test_midpoint_rule():
    r = gauss_legendre_rule(1)
    np.testing.assert_allclose(r.points, [0.5])
    np.testing.assert_allclose(r.weights, [1.0])


def test_two_point_rule():
    r = gauss_legendre_rule(2)
    np.testing.assert_allclose(np.sort(r.points), [0.5 - 0.5 / np.sqrt(3), 0.5 + 0.5 / np.sqrt(3)], atol=1e-15)


def test_quintic_exact_with_three_points():
    r = gauss_legendre_rule(3)
    assert np.sum(r.weights * r.points**5) == pytest.approx(1 / 6, abs=1e-14)


@given(st.integers(1, 30))
def test_rule_exactness(q):
    r = gauss_legendre_rule(q)
    k = 2 * q - 1
    assert np.sum(r.weights * r.points**k) == pytest.approx(1 / (k + 1), abs=1e-13)


@pytest.mark.parametrize("q", [0, 31])
def test_rule_range(q):
    with pytest.raises(ValueError):
        gauss_legendre_rule(q)


# --- 1D matrices and stencils -------------------------------------------------------------


def test_quadratic_stencil():
    space = SplineSpace.uniform(2, 8)
    S = interior_stencil(assemble_1d(space), space)
    np.testing.assert_allclose(S.coeffs, [1, -1 / 3, -1 / 6], atol=1e-13)
    assert S.scale == pytest.approx(8.0)


def test_linear_stencil():
    S = stiffness_stencil(1)
    np.testing.assert_allclose(S.coeffs, [2, -1], atol=1e-13)
    np.testing.assert_allclose(S.full(), [-1, 2, -1], atol=1e-13)


def test_linear_mass_stencil():
    np.testing.assert_allclose(mass_stencil(1).coeffs, [2 / 3, 1 / 6], atol=1e-14)


@pytest.mark.parametrize("p", range(3, 9))
def test_stencil_matches_cardinal_quadrature(p):
    np.testing.assert_allclose(stiffness_stencil(p).coeffs, cardinal_stiffness(p), atol=1e-13)


@pytest.mark.parametrize("p", range(1, 9))
def test_stencil_zero_sum(p):
    a = stiffness_stencil(p).coeffs
    assert a[0] > 0
    assert abs(a[0] + 2 * a[1:].sum()) <= 1e-12


def test_stencil_needs_interior_rows():
    space = SplineSpace.uniform(3, 8)
    with pytest.raises(ValueError):
        interior_stencil(assemble_1d(space), space)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.integers(0, 4))
def test_interior_rows_are_shifts(p, extra):
    m = 3 * p + 4 + extra
    A = assemble_1d(SplineSpace.uniform(p, m)).toarray()
    rows = [A[c - 1, c - 1 - p : c + p] for c in range(2 * p, m - p)]
    for r in rows[1:]:
        np.testing.assert_allclose(r, rows[0], atol=1e-12 * m)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.integers(2, 20))
def test_1d_spd_and_banded(p, m):
    A = assemble_1d(SplineSpace.uniform(p, m))
    assert A.shape == (p + m - 2,) * 2
    D = A.toarray()
    np.testing.assert_allclose(D, D.T, atol=1e-12)
    assert np.linalg.eigvalsh(D).min() > 0
    i, j = np.nonzero(D)
    assert np.max(np.abs(i - j)) <= p


def test_zero_load():
    b = assemble_rhs_1d(SplineSpace.uniform(3, 9), lambda x: 0 * x)
    assert b.shape == (10,) and not b.any()


def _l2_error_1d(p, m):
    space = SplineSpace.uniform(p, m)
    A = assemble_1d(space)
    b = assemble_rhs_1d(space, assembly.rhs_poisson1d)
    c = sp.linalg.spsolve(A.tocsc(), b)
    t, w = np.polynomial.legendre.leggauss(p + 4)
    x = (np.arange(m)[:, None] + 0.5 * (t + 1)[None, :]).ravel() / m
    wx = np.tile(0.5 * w / m, m)
    uh = collocation_matrix(space.knot_vector, x)[:, 1:-1] @ c
    return np.sqrt(np.sum(wx * (uh - assembly.exact_poisson1d(x)) ** 2))


@pytest.mark.parametrize("p", [2, 3])
def test_l2_convergence_order(p):
    errs = [_l2_error_1d(p, m) for m in (8, 16, 32)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(orders - (p + 1)) <= 0.3), orders


# --- 2D --------------------------------------------------------------------------------


@pytest.mark.parametrize("p", [2, 3, 4])
def test_kronecker_identity(p):
    s = SplineSpace.uniform(p, 8)
    K, M = assemble_1d(s), assemble_1d(s, "mass")
    ref = sp.kron(K, M) + sp.kron(M, K)
    A = assemble_2d_parametric(s, s)
    assert abs(A - ref).max() <= 1e-10 * abs(ref).max()


def test_anisotropic_kronecker_ordering():
    su, sv = SplineSpace.uniform(2, 6), SplineSpace.uniform(3, 5)
    ref = sp.kron(assemble_1d(su), assemble_1d(sv, "mass")) + sp.kron(assemble_1d(su, "mass"), assemble_1d(sv))
    A = assemble_2d_parametric(su, sv)
    assert abs(A - ref).max() <= 1e-12


def test_single_dof():
    s = SplineSpace.uniform(1, 2)
    A = assemble_2d_parametric(s, s)
    assert A.shape == (1, 1) and A[0, 0] > 0


def test_identity_map_matches_parametric():
    s = SplineSpace.uniform(3, 6)
    A0 = assemble_2d_parametric(s, s)
    A1 = assemble_2d_mapped(s, s, unit_square_map())
    assert abs(A0 - A1).max() <= 1e-12


def test_scaled_square_stiffness_invariant():
    s = SplineSpace.uniform(2, 6)
    A1 = assemble_2d_mapped(s, s, unit_square_map())
    A2 = assemble_2d_mapped(s, s, unit_square_map(2.0))
    assert abs(A1 - A2).max() <= 1e-12
    M1 = assembly.assemble_2d(s, s, unit_square_map(), kind="mass")
    M2 = assembly.assemble_2d(s, s, unit_square_map(2.0), kind="mass")
    assert abs(4 * M1 - M2).max() <= 1e-12


def test_inverted_map_rejected():
    s = SplineSpace.uniform(2, 4)
    with pytest.raises(ValueError, match="quadrature point"):
        assemble_2d_mapped(s, s, unit_square_map(flip=True))


@pytest.mark.parametrize("p,m", [(2, 8), (3, 6), (4, 4)])
def test_annulus_matrix_spd(p, m):
    s = SplineSpace.uniform(p, m)
    A = assemble_2d_mapped(s, s, quarter_annulus_geometry(0.3, 0.5)).toarray()
    np.testing.assert_allclose(A, A.T, atol=1e-12)
    assert np.linalg.eigvalsh(A).min() > 0
    np.linalg.cholesky(A[:6, :6])


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 4), st.integers(2, 6))
def test_parametric_spd(p, m):
    s = SplineSpace.uniform(p, m)  # at most 64 unknowns
    A = assemble_2d_parametric(s, s).toarray()
    assert np.linalg.eigvalsh(A).min() > 0


def test_annulus_mass_integrates_area():
    # sum of the mass matrix over the full NURBS basis is the area; the interior
    # part is bounded by it
    s = SplineSpace.uniform(2, 8)
    g = quarter_annulus_geometry(0.3, 0.5)
    M = assembly.assemble_2d(s, s, g, kind="mass")
    assert 0 < M.sum() < np.pi * (0.5**2 - 0.3**2) / 4


def test_annulus_rhs_matches_fd_laplacian():
    rng = np.random.default_rng(0)
    rho = rng.uniform(0.3, 0.5, 100)
    phi = rng.uniform(0, np.pi / 2, 100)
    x, y = rho * np.cos(phi), rho * np.sin(phi)
    u = assembly.exact_annulus
    d = 1e-4
    lap = (u(x + d, y) + u(x - d, y) + u(x, y + d) + u(x, y - d) - 4 * u(x, y)) / d**2
    f = assembly.rhs_annulus(x, y)
    assert np.linalg.norm(f + lap) <= 1e-6 * np.linalg.norm(f)


def test_annulus_rhs_on_boundary():
    assert assembly.exact_annulus(0.4, 0.0) == 0.0
    assert np.isfinite(assembly.rhs_annulus(0.4, 0.0))


def test_annulus_discrete_solution_converges():
    g = quarter_annulus_geometry(0.3, 0.5)
    errs = []
    for m in (4, 8):
        s = SplineSpace.uniform(2, m)
        A = assemble_2d_mapped(s, s, g)
        b = assemble_rhs_2d(s, s, assembly.rhs_annulus, geometry=g)
        c = sp.linalg.spsolve(A.tocsc(), b)
        # compare against the interpolant at a few interior points
        xi = np.array([0.3, 0.5, 0.7])
        Cu = collocation_matrix(s.knot_vector, xi)[:, 1:-1]
        w = assembly.nurbs_dof_weights(s, s, g)
        F, _, W, _ = g.evaluate_grid(xi, xi)
        uh = np.einsum("xi,yj,ij->xy", Cu, Cu, w * c.reshape(s.dim, s.dim)) / W
        errs.append(np.max(np.abs(uh - assembly.exact_annulus(F[..., 0], F[..., 1]))))
    assert errs[1] < errs[0] / 4


def test_dof_guard(monkeypatch):
    monkeypatch.setattr(assembly, "MAX_DOFS", 10)
    s = SplineSpace.uniform(2, 4)
    with pytest.raises(ValueError, match="exceeds"):
        assemble_2d_parametric(s, s)


def test_matrix_market_roundtrip(tmp_path):
    A = assemble_1d(SplineSpace.uniform(2, 6))
    path = tmp_path / "k.mtx"
    assembly.write_matrix_market(path, A, comment="stiffness p=2")
    B = scipy.io.mmread(str(path))
    assert abs(A - B).max() <= 1e-15
