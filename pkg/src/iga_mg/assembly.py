"""Stiffness/mass matrices and load vectors for the 1D, 2D parametric and
NURBS-mapped Poisson problems, plus interior stencil extraction.

Matrices are ``scipy.sparse.csr_matrix`` over the interior degrees of freedom
(first and last B-spline removed in every direction). 2D unknowns are ordered
row-major, ``k = i * n_v + j`` with ``i`` the xi-index and ``j`` the eta-index,
so the parametric stiffness matrix is ``K (x) M + M (x) K``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.io
import scipy.sparse as sp

from .splines import GeometryMap, KnotVector, SplineSpace, basis_values, embedding_matrix

MAX_DOFS = 10_000_000


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre rule on [0, 1]."""

    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def q(self) -> int:
        return len(self.points)


def gauss_legendre_rule(q: int) -> QuadratureRule:
    if not 1 <= q <= 30:
        raise ValueError(f"quadrature order must be in [1, 30], got {q}")
    x, w = np.polynomial.legendre.leggauss(q)
    return QuadratureRule(0.5 * (x + 1.0), 0.5 * w)


@dataclass(frozen=True)
class Stencil1D:
    """Symmetric interior stencil ``[a_p, ..., a_1, a_0, a_1, ..., a_p] * scale``."""

    p: int
    coeffs: np.ndarray  # a_0, ..., a_p (dimensionless)
    scale: float = 1.0

    def full(self) -> np.ndarray:
        a = np.asarray(self.coeffs)
        return np.concatenate([a[:0:-1], a])


@dataclass
class ElementData:
    """Basis values at the Gauss points of every knot span of one direction."""

    x: np.ndarray  # (m, q) quadrature points
    w: np.ndarray  # (m, q) weights scaled to the span length
    N: np.ndarray  # (m, q, p+1)
    dN: np.ndarray  # (m, q, p+1)
    n: int  # number of B-splines (full, incl. boundary functions)

    @property
    def m(self) -> int:
        return self.x.shape[0]


def element_data(kv: KnotVector, q: int | None = None) -> ElementData:
    q = kv.p + 1 if q is None else q
    rule = gauss_legendre_rule(q)
    brk = kv.breaks
    lengths = np.diff(brk)
    x = brk[:-1, None] + lengths[:, None] * rule.points[None, :]
    w = lengths[:, None] * rule.weights[None, :]
    first, N, dN = basis_values(kv, x.ravel(), derivative=True)
    m = len(lengths)
    # with simple interior knots the first active function of span e is e
    if not np.array_equal(first.reshape(m, q)[:, 0], np.arange(m)):
        raise ValueError("element data requires simple interior knots")
    p1 = kv.p + 1
    return ElementData(x, w, N.reshape(m, q, p1), dN.reshape(m, q, p1), kv.n)


# --- 1D -----------------------------------------------------------------------


def _band_to_csr_1d(D: np.ndarray) -> sp.csr_matrix:
    """Full-basis band ``D[i, di + p]`` -> CSR over interior indices 1..n-2."""
    n, bw = D.shape
    p = (bw - 1) // 2
    rows = np.arange(1, n - 1)[:, None]
    cols = rows + np.arange(-p, p + 1)[None, :]
    mask = (cols >= 1) & (cols <= n - 2)
    data = D[1:-1][mask]
    indices = (cols[mask] - 1).astype(np.int32)
    indptr = np.concatenate([[0], np.cumsum(mask.sum(axis=1))]).astype(np.int32)
    return sp.csr_matrix((data, indices, indptr), shape=(n - 2, n - 2))


def _assemble_band_1d(ed: ElementData, test: np.ndarray, trial: np.ndarray, coef=None):
    m, q, p1 = test.shape
    p = p1 - 1
    w = ed.w if coef is None else ed.w * coef
    D = np.zeros((ed.n, 2 * p + 1))
    for a in range(p1):
        for c in range(p1):
            D[a : a + m, c - a + p] += np.einsum("es,es,es->e", w, test[:, :, a], trial[:, :, c])
    return D


def assemble_1d(space: SplineSpace, kind: str = "stiffness") -> sp.csr_matrix:
    """Stiffness (``-u''``) or mass matrix of the 1D spline space.

    Uses ``p + 1`` Gauss points per knot span.
    """
    ed = element_data(space.knot_vector)
    if kind == "stiffness":
        D = _assemble_band_1d(ed, ed.dN, ed.dN)
    elif kind == "mass":
        D = _assemble_band_1d(ed, ed.N, ed.N)
    else:
        raise ValueError(f"unknown matrix kind {kind!r}")
    return _band_to_csr_1d(D)


def assemble_mass_1d(space: SplineSpace) -> sp.csr_matrix:
    return assemble_1d(space, kind="mass")


def assemble_rhs_1d(space: SplineSpace, f) -> np.ndarray:
    ed = element_data(space.knot_vector)
    fw = ed.w * np.asarray(f(ed.x), dtype=float) * np.ones_like(ed.x)
    b = np.zeros(ed.n)
    p1 = space.p + 1
    for a in range(p1):
        b[a : a + ed.m] += np.einsum("es,es->e", fw, ed.N[:, :, a])
    return b[1:-1]


# --- 2D tensor-product machinery ------------------------------------------------


def _check_dofs(*spaces):
    ndof = int(np.prod([s.dim for s in spaces]))
    if ndof > MAX_DOFS:
        raise ValueError(f"{ndof} unknowns exceeds the limit of {MAX_DOFS}")


def _partial_v(C, Yt, Ys, n_v):
    """Contract the eta-direction: T[x, s, j, dj + pv]."""
    mu, qu, mv, qv = C.shape
    p1 = Yt.shape[2]
    pv = p1 - 1
    T = np.zeros((mu, qu, n_v, 2 * pv + 1))
    for b in range(p1):
        for d in range(p1):
            w = Yt[:, :, b] * Ys[:, :, d]  # (mv, qv)
            E = np.einsum("xsyt,yt->xsy", C, w, optimize=True)
            T[:, :, b : b + mv, d - b + pv] += E
    return T


def _accumulate_u(D, T, Xt, Xs):
    """Contract the xi-direction of ``T`` into the band ``D[i, j, di, dj]``."""
    mu, qu, p1 = Xt.shape
    pu = p1 - 1
    for a in range(p1):
        for c in range(p1):
            w = Xt[:, :, a] * Xs[:, :, c]  # (mu, qu)
            E = np.einsum("xs,xsjl->xjl", w, T, optimize=True)
            D[a : a + mu, :, c - a + pu, :] += E


def _band_to_csr_2d(D: np.ndarray) -> sp.csr_matrix:
    n_u, n_v, bu, bv = D.shape
    pu, pv = (bu - 1) // 2, (bv - 1) // 2
    ni, nj = n_u - 2, n_v - 2
    I = np.arange(1, n_u - 1, dtype=np.int32)[:, None, None, None]
    J = np.arange(1, n_v - 1, dtype=np.int32)[None, :, None, None]
    DI = np.arange(-pu, pu + 1, dtype=np.int32)[None, None, :, None]
    DJ = np.arange(-pv, pv + 1, dtype=np.int32)[None, None, None, :]
    ci, cj = I + DI, J + DJ
    mask = (ci >= 1) & (ci <= n_u - 2) & (cj >= 1) & (cj <= n_v - 2)
    data = D[1:-1, 1:-1][mask]
    col = ((ci - 1) * nj + (cj - 1))
    indices = np.broadcast_to(col, mask.shape)[mask].astype(np.int32)
    counts = mask.reshape(ni * nj, -1).sum(axis=1)
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return sp.csr_matrix((data, indices, indptr), shape=(ni * nj, ni * nj))


@dataclass
class _Fields:
    """Quadrature-point coefficient fields on the (mu, qu, mv, qv) grid."""

    wdet: np.ndarray  # weight * |det J| / W^2 (for mass) etc.
    K: dict  # stiffness coefficient for each pair of basis components
    F: np.ndarray | None  # physical points (mu, qu, mv, qv, 2)
    rhs_scale: np.ndarray  # weight * |det J| / W


def _fields(edu: ElementData, edv: ElementData, geometry: GeometryMap | None) -> _Fields:
    mu, qu = edu.x.shape
    mv, qv = edv.x.shape
    wq = edu.w.reshape(mu, qu, 1, 1) * edv.w.reshape(1, 1, mv, qv)
    if geometry is None:
        ones = np.ones((mu, qu, mv, qv))
        K = {("A", "A"): wq, ("B", "B"): wq * ones}
        X = np.broadcast_to(edu.x.reshape(mu, qu, 1, 1), (mu, qu, mv, qv))
        Y = np.broadcast_to(edv.x.reshape(1, 1, mv, qv), (mu, qu, mv, qv))
        return _Fields(wq * ones, K, np.stack([X, Y], axis=-1), wq * ones)

    F, J, W, dW = geometry.evaluate_grid(edu.x.ravel(), edv.x.ravel())
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if np.any(det <= 0):
        k = np.unravel_index(np.argmin(det), det.shape)
        xi, eta = edu.x.ravel()[k[0]], edv.x.ravel()[k[1]]
        raise ValueError(
            f"nonpositive Jacobian determinant {det[k]:.3e} at quadrature point (xi, eta) = ({xi}, {eta})"
        )
    Jinv = np.linalg.inv(J)
    G = np.einsum("...ac,...bc->...ab", Jinv, Jinv) * det[..., None, None]
    g = dW / W[..., None]
    comps = {
        "A": np.broadcast_to(np.array([1.0, 0.0]), g.shape),
        "B": np.broadcast_to(np.array([0.0, 1.0]), g.shape),
        "C": -g,
    }

    def grid(a):
        return a.reshape(mu, qu, mv, qv, *a.shape[2:])

    wq4 = wq
    K = {}
    for c, vc in comps.items():
        for d, vd in comps.items():
            K[(c, d)] = grid(np.einsum("...a,...ab,...b->...", vc, G, vd) / W**2) * wq4
    return _Fields(
        grid(det / W**2) * wq4,
        K,
        grid(F),
        grid(det / W) * wq4,
    )


def _factors(ed: ElementData, comp: str, direction: int):
    """u- and v-factors of the basis components A = N'N, B = NN', C = NN."""
    derivative = (comp == "A" and direction == 0) or (comp == "B" and direction == 1)
    return ed.dN if derivative else ed.N


def _assemble_terms_2d(edu, edv, terms) -> np.ndarray:
    """Sum of tensor terms ``{(c, d): coef}``, grouped by their xi-factor pair."""
    pu, pv = edu.N.shape[2] - 1, edv.N.shape[2] - 1
    D = np.zeros((edu.n, edv.n, 2 * pu + 1, 2 * pv + 1))
    groups: dict = {}
    for (c, d), coef in terms.items():
        key = (_factors(edu, c, 0) is edu.dN, _factors(edu, d, 0) is edu.dN)
        T = _partial_v(coef, _factors(edv, c, 1), _factors(edv, d, 1), edv.n)
        groups[key] = groups.get(key, 0) + T
    for (dt, ds), T in groups.items():
        Xt = edu.dN if dt else edu.N
        Xs = edu.dN if ds else edu.N
        _accumulate_u(D, T, Xt, Xs)
    return D


def nurbs_dof_weights(space_u: SplineSpace, space_v: SplineSpace, geometry: GeometryMap) -> np.ndarray:
    """Weights of the refined NURBS basis on the interior dofs, shape (n_u-2, n_v-2).

    The geometry's weight function is re-expressed exactly in the discretization
    space (degree elevation plus knot insertion).
    """
    Eu = embedding_matrix(geometry.kv_u, space_u.knot_vector)
    Ev = embedding_matrix(geometry.kv_v, space_v.knot_vector)
    w = Eu @ geometry.weights @ Ev.T
    if np.any(w <= 0):
        raise ValueError("refined NURBS weights are not positive")
    return w[1:-1, 1:-1]


def assemble_2d(
    space_u: SplineSpace,
    space_v: SplineSpace,
    geometry: GeometryMap | None = None,
    kind: str = "stiffness",
) -> sp.csr_matrix:
    """Stiffness or mass matrix on the unit square or on a NURBS-mapped domain.

    With a geometry the basis functions are the refined NURBS
    ``w_ij N_i N_j / W`` composed with the inverse map.
    """
    _check_dofs(space_u, space_v)
    edu = element_data(space_u.knot_vector)
    edv = element_data(space_v.knot_vector)
    fl = _fields(edu, edv, geometry)
    if kind == "stiffness":
        terms = fl.K
    elif kind == "mass":
        terms = {("C", "C"): fl.wdet}
    else:
        raise ValueError(f"unknown matrix kind {kind!r}")
    A = _band_to_csr_2d(_assemble_terms_2d(edu, edv, terms))
    if geometry is not None:
        d = sp.diags(nurbs_dof_weights(space_u, space_v, geometry).ravel())
        A = (d @ A @ d).tocsr()
    return A


def assemble_2d_parametric(space_u: SplineSpace, space_v: SplineSpace) -> sp.csr_matrix:
    return assemble_2d(space_u, space_v)


def assemble_2d_mapped(space_u: SplineSpace, space_v: SplineSpace, geometry: GeometryMap) -> sp.csr_matrix:
    return assemble_2d(space_u, space_v, geometry)


def assemble_rhs_2d(space_u: SplineSpace, space_v: SplineSpace, f, geometry: GeometryMap | None = None) -> np.ndarray:
    """Load vector ``(f, phi_ij)``; ``f`` takes physical coordinates ``(x, y)``."""
    _check_dofs(space_u, space_v)
    edu = element_data(space_u.knot_vector)
    edv = element_data(space_v.knot_vector)
    fl = _fields(edu, edv, geometry)
    vals = np.asarray(f(fl.F[..., 0], fl.F[..., 1]), dtype=float) * fl.rhs_scale
    mu, mv = edu.m, edv.m
    b = np.zeros((edu.n, edv.n))
    for a in range(space_u.p + 1):
        tmp = np.einsum("xsyt,xs->yxt", vals, edu.N[:, :, a], optimize=True)
        for c in range(space_v.p + 1):
            b[a : a + mu, c : c + mv] += np.einsum("yxt,yt->xy", tmp, edv.N[:, :, c], optimize=True)
    b = b[1:-1, 1:-1]
    if geometry is not None:
        b = b * nurbs_dof_weights(space_u, space_v, geometry)
    return b.ravel()


def assemble_rhs(spaces, f, geometry: GeometryMap | None = None) -> np.ndarray:
    """Load vector for a single space (1D) or a pair of spaces (2D)."""
    if isinstance(spaces, SplineSpace):
        if geometry is not None:
            raise ValueError("geometry maps are only supported in 2D")
        return assemble_rhs_1d(spaces, f)
    return assemble_rhs_2d(*spaces, f, geometry=geometry)


# --- model problem data -------------------------------------------------------------


def rhs_poisson1d(x):
    return np.pi**2 * np.sin(np.pi * x)


def exact_poisson1d(x):
    return np.sin(np.pi * x)


def rhs_poisson2d(x, y):
    return 2 * np.pi**2 * np.sin(np.pi * x) * np.sin(np.pi * y)


def exact_annulus(x, y, r=0.3, R=0.5):
    rho2 = x**2 + y**2
    return np.sin(np.pi * x) * np.sin(np.pi * y) * (rho2 - r**2) * (rho2 - R**2)


def rhs_annulus(x, y, r=0.3, R=0.5):
    """``-Laplace`` of :func:`exact_annulus`, expanded by hand."""
    rho2 = x**2 + y**2
    s = np.sin(np.pi * x) * np.sin(np.pi * y)
    q = (rho2 - r**2) * (rho2 - R**2)
    lap_q = 16 * rho2 - 4 * (r**2 + R**2)
    grad_s_dot_grad_q = (
        2 * np.pi * (2 * rho2 - r**2 - R**2)
        * (x * np.cos(np.pi * x) * np.sin(np.pi * y) + y * np.sin(np.pi * x) * np.cos(np.pi * y))
    )
    return 2 * np.pi**2 * s * q - 2 * grad_s_dot_grad_q - s * lap_q


# --- stencils ---------------------------------------------------------------------


def interior_stencil(A: sp.spmatrix, space: SplineSpace, zero_sum: bool = True, tol: float = 1e-12) -> Stencil1D:
    """Translation-invariant interior row of a 1D matrix, normalised by ``h``.

    Needs two neighbouring rows whose basis function and all its neighbours are
    uniform (cardinal) B-splines, i.e. ``m >= 3p + 2``.
    """
    p, m = space.p, space.m
    if m < 3 * p + 2:
        raise ValueError(f"no fully interior row for p={p}, m={m}; need m >= {3 * p + 2}")
    A = sp.csr_matrix(A)
    # full index c is interior when 2p <= c <= n - 2p - 1; interior index is c - 1
    c = (2 * p + (p + m - 2 * p - 1)) // 2
    rows = []
    for full in (c, c + 1):
        i = full - 1
        rows.append(A[i, i - p : i + p + 1].toarray().ravel())
    r0, r1 = rows
    if np.max(np.abs(r0 - r1)) > tol * max(1.0, np.max(np.abs(r0))):
        raise ValueError("interior rows are not translation invariant")
    if np.max(np.abs(r0 - r0[::-1])) > tol * max(1.0, np.max(np.abs(r0))):
        raise ValueError("interior stencil is not symmetric")
    # stiffness scales like 1/h, mass like h
    scale = 1.0 / space.h if zero_sum else space.h
    a = r0[p:] / scale
    if zero_sum and abs(a[0] + 2 * a[1:].sum()) > tol * max(1.0, abs(a[0])):
        raise ValueError("stencil row sum is not zero")
    return Stencil1D(p, a, scale)


@lru_cache(maxsize=None)
def _cached_stencil(p: int, kind: str) -> Stencil1D:
    space = SplineSpace.uniform(p, 4 * p + 4)
    A = assemble_1d(space, kind)
    S = interior_stencil(A, space, zero_sum=(kind == "stiffness"))
    S.coeffs.setflags(write=False)
    return Stencil1D(p, S.coeffs, 1.0)


def stiffness_stencil(p: int) -> Stencil1D:
    """Dimensionless (h = 1) stiffness stencil of degree ``p``."""
    return _cached_stencil(p, "stiffness")


def mass_stencil(p: int) -> Stencil1D:
    """Dimensionless (h = 1) mass stencil of degree ``p``."""
    return _cached_stencil(p, "mass")


def write_matrix_market(path, A: sp.spmatrix, comment: str = "") -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), comment=comment, symmetry="general")
