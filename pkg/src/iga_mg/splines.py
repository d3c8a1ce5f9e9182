"""Open uniform knot vectors, B-spline/NURBS evaluation and refinement kernels."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg


@dataclass(frozen=True)
class KnotVector:
    """Open knot vector of degree ``p``.

    ``knots`` has length ``n + p + 1`` where ``n`` is the number of B-splines.
    """

    p: int
    knots: np.ndarray = field(repr=False)

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        knots.setflags(write=False)
        object.__setattr__(self, "knots", knots)
        if self.p < 0:
            raise ValueError(f"degree must be nonnegative, got {self.p}")
        if knots.ndim != 1 or len(knots) < 2 * (self.p + 1):
            raise ValueError("knot vector too short for its degree")
        if np.any(np.diff(knots) < 0):
            raise ValueError("knots must be non-decreasing")
        p = self.p
        if np.any(knots[: p + 1] != knots[0]) or np.any(knots[-p - 1 :] != knots[-1]):
            raise ValueError("knot vector is not open")

    @property
    def n(self) -> int:
        """Number of B-splines."""
        return len(self.knots) - self.p - 1

    @property
    def breaks(self) -> np.ndarray:
        return np.unique(self.knots)

    @property
    def m(self) -> int:
        """Number of nonempty knot spans."""
        return len(self.breaks) - 1

    def greville(self) -> np.ndarray:
        p = self.p
        if p == 0:
            return 0.5 * (self.knots[:-1] + self.knots[1:])
        win = np.lib.stride_tricks.sliding_window_view(self.knots[1:-1], p)
        return win.mean(axis=1)

    def __eq__(self, other):
        if not isinstance(other, KnotVector):
            return NotImplemented
        return self.p == other.p and np.array_equal(self.knots, other.knots)

    def __hash__(self):
        return hash((self.p, self.knots.tobytes()))


def open_uniform_knots(p: int, m: int) -> KnotVector:
    """Open uniform knot vector on [0, 1] with ``m`` equal spans and simple interior knots."""
    if p < 1:
        raise ValueError(f"degree p must be >= 1, got {p}")
    if m < 2:
        raise ValueError(f"need at least m=2 spans, got {m}")
    interior = np.arange(1, m) / m
    knots = np.concatenate([np.zeros(p + 1), interior, np.ones(p + 1)])
    return KnotVector(p, knots)


@dataclass(frozen=True)
class SplineSpace:
    """Degree-p, C^{p-1} spline space on [0, 1] vanishing at both ends.

    The basis consists of the B-splines of ``knot_vector`` with the first and
    last one removed, so ``dim == p + m - 2``.
    """

    knot_vector: KnotVector

    @classmethod
    def uniform(cls, p: int, m: int) -> "SplineSpace":
        return cls(open_uniform_knots(p, m))

    @property
    def p(self) -> int:
        return self.knot_vector.p

    @property
    def m(self) -> int:
        return self.knot_vector.m

    @property
    def h(self) -> float:
        return 1.0 / self.m

    @property
    def dim(self) -> int:
        return self.knot_vector.n - 2

    def coarsened(self) -> "SplineSpace":
        if self.m % 2:
            raise ValueError(f"cannot halve a mesh with m={self.m} spans")
        return SplineSpace.uniform(self.p, self.m // 2)


# --- basis evaluation ------------------------------------------------------


def find_spans(kv: KnotVector, x) -> np.ndarray:
    """Span index ``s`` with ``knots[s] <= x < knots[s+1]``; the last span is closed."""
    x = np.asarray(x, dtype=float)
    t = kv.knots
    if np.any((x < t[0]) | (x > t[-1])) or np.any(np.isnan(x)):
        raise ValueError(f"evaluation point outside [{t[0]}, {t[-1]}]")
    s = np.searchsorted(t, x, side="right") - 1
    return np.clip(s, kv.p, kv.n - 1)


def _triangle(t, p, s, x):
    """Cox-de-Boor triangle on the active window; returns degree p-1 and p values."""
    npts = x.shape[0]
    left = np.empty((p + 1, npts))
    right = np.empty((p + 1, npts))
    N = np.zeros((p + 1, npts))
    N[0] = 1.0
    lower = N[:1].copy()
    for j in range(1, p + 1):
        left[j] = x - t[s + 1 - j]
        right[j] = t[s + j] - x
        if j == p:
            lower = N[:p].copy()
        saved = np.zeros(npts)
        for r in range(j):
            # denominator is a sum of knot spans containing span s, never zero
            temp = N[r] / (right[r + 1] + left[j - r])
            N[r] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        N[j] = saved
    return lower.T, N.T


def basis_values(kv: KnotVector, x, derivative: bool = False):
    """Vectorised evaluation of the p+1 active B-splines.

    Parameters
    ----------
    kv : KnotVector
    x : array_like
        Points in the parameter interval.
    derivative : bool
        Also return first derivatives.

    Returns
    -------
    first : ndarray of int
        Global index of the first active function for every point.
    N : ndarray, shape (npts, p+1)
    dN : ndarray, shape (npts, p+1), only if ``derivative``
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    s = find_spans(kv, x)
    t = kv.knots
    p = kv.p
    lower, N = _triangle(t, p, s, x)
    first = s - p
    if not derivative:
        return first, N
    dN = np.zeros_like(N)
    if p > 0:
        for r in range(p):
            # lower-degree function j = s - p + 1 + r contributes to N_{j-1} and N_j
            j = s - p + 1 + r
            span = t[j + p] - t[j]
            c = np.where(span > 0, p / np.where(span > 0, span, 1.0), 0.0)
            dN[:, r] -= c * lower[:, r]
            dN[:, r + 1] += c * lower[:, r]
    return first, N, dN


def eval_basis(kv: KnotVector, xi: float):
    """Index of the first nonzero B-spline at ``xi`` and the p+1 values there."""
    first, N = basis_values(kv, [xi])
    return int(first[0]), N[0]


def eval_basis_derivative(kv: KnotVector, xi: float):
    first, _, dN = basis_values(kv, [xi], derivative=True)
    return int(first[0]), dN[0]


def collocation_matrix(kv: KnotVector, x, derivative: bool = False) -> np.ndarray:
    """Dense matrix of all n B-splines (or their derivatives) at the points ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = basis_values(kv, x, derivative=derivative)
    first, vals = out[0], out[-1]
    C = np.zeros((len(x), kv.n))
    rows = np.repeat(np.arange(len(x)), kv.p + 1)
    cols = (first[:, None] + np.arange(kv.p + 1)).ravel()
    C[rows, cols] = vals.ravel()
    return C


# --- refinement ---------------------------------------------------------------


def knot_insertion_matrix(coarse: KnotVector, fine: KnotVector) -> np.ndarray:
    """Oslo algorithm: coefficients expressing coarse B-splines in the fine basis.

    Returns the ``fine.n x coarse.n`` matrix ``T`` with
    ``N^coarse_j = sum_i T[i, j] N^fine_i``. Both knot vectors must have the same
    degree and ``fine`` must contain every knot of ``coarse``.
    """
    if coarse.p != fine.p:
        raise ValueError("knot insertion needs equal degrees")
    p = coarse.p
    tau, t = coarse.knots, fine.knots
    if tau[0] != t[0] or tau[-1] != t[-1]:
        raise ValueError("knot vectors span different intervals")
    ct, cf = np.unique(tau, return_counts=True)
    ft, ff = np.unique(t, return_counts=True)
    fine_mult = dict(zip(ft.tolist(), ff.tolist()))
    if any(fine_mult.get(k, 0) < c for k, c in zip(ct.tolist(), cf.tolist())):
        raise ValueError("fine knot vector does not contain the coarse one")

    T = np.zeros((fine.n, coarse.n))
    for i in range(fine.n):
        # coarse span containing fine knot t_i, kept inside the valid range
        mu = int(np.searchsorted(tau, t[i], side="right")) - 1
        mu = min(max(mu, p), coarse.n - 1)
        b = np.ones(1)
        for k in range(1, p + 1):
            x = t[i + k]
            nb = np.zeros(k + 1)
            for r in range(k):
                j = mu - k + 1 + r
                d = tau[j + k] - tau[j]
                if d > 0:
                    w = (x - tau[j]) / d
                    nb[r + 1] += w * b[r]
                    nb[r] += (1.0 - w) * b[r]
            b = nb
        T[i, mu - p : mu + 1] = b
    return T


def embedding_matrix(source: KnotVector, target: KnotVector) -> np.ndarray:
    """Coefficients of the ``source`` B-splines in a nested ``target`` space.

    Works for any nested pair (knot insertion, degree elevation or both) by
    interpolation at the Greville abscissae of ``target``.
    """
    tau = target.greville()
    Ct = collocation_matrix(target, tau)
    Cs = collocation_matrix(source, tau)
    T = scipy.linalg.solve(Ct, Cs)
    T[np.abs(T) < 1e-14] = 0.0
    return T


# --- NURBS -------------------------------------------------------------------


def nurbs_eval(kv_u: KnotVector, kv_v: KnotVector, weights, xi: float, eta: float):
    """Rational basis functions and their parametric gradients at one point.

    Returns ``(first_u, first_v, R, dR)`` where ``R`` has shape
    ``(pu+1, pv+1)`` and ``dR`` has shape ``(2, pu+1, pv+1)``.
    """
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (kv_u.n, kv_v.n):
        raise ValueError(f"weights must have shape {(kv_u.n, kv_v.n)}")
    if np.any(weights <= 0):
        raise ValueError("NURBS weights must be positive")
    fu, Nu, dNu = basis_values(kv_u, [xi], derivative=True)
    fv, Nv, dNv = basis_values(kv_v, [eta], derivative=True)
    fu, fv = int(fu[0]), int(fv[0])
    w = weights[fu : fu + kv_u.p + 1, fv : fv + kv_v.p + 1]
    Nu, dNu, Nv, dNv = Nu[0], dNu[0], Nv[0], dNv[0]
    num = w * np.outer(Nu, Nv)
    dnum_u = w * np.outer(dNu, Nv)
    dnum_v = w * np.outer(Nu, dNv)
    W = num.sum()
    Wu, Wv = dnum_u.sum(), dnum_v.sum()
    R = num / W
    dR = np.stack([(dnum_u - R * Wu) / W, (dnum_v - R * Wv) / W])
    return fu, fv, R, dR


@dataclass(frozen=True)
class GeometryMap:
    """Single-patch NURBS map from the unit square into the plane."""

    kv_u: KnotVector
    kv_v: KnotVector
    control_points: np.ndarray = field(repr=False)  # (nu, nv, 2)
    weights: np.ndarray = field(repr=False)  # (nu, nv)

    def __post_init__(self):
        cp = np.asarray(self.control_points, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        shape = (self.kv_u.n, self.kv_v.n)
        if cp.shape != shape + (2,) or w.shape != shape:
            raise ValueError(f"control net must have shape {shape}")
        if np.any(w <= 0):
            raise ValueError("NURBS weights must be positive")
        object.__setattr__(self, "control_points", cp)
        object.__setattr__(self, "weights", w)

    def evaluate_grid(self, xi, eta):
        """Map, Jacobian and weight function on the tensor grid ``xi x eta``.

        Returns
        -------
        F : (nx, ny, 2)
        J : (nx, ny, 2, 2) with ``J[..., a, b] = dF_a / d(param_b)``
        W : (nx, ny) denominator ``sum w_ij N_i N_j``
        dW : (nx, ny, 2) its parametric gradient
        """
        Cu = collocation_matrix(self.kv_u, xi)
        dCu = collocation_matrix(self.kv_u, xi, derivative=True)
        Cv = collocation_matrix(self.kv_v, eta)
        dCv = collocation_matrix(self.kv_v, eta, derivative=True)
        w = self.weights
        wP = w[..., None] * self.control_points

        def tp(A, B, coef):
            return np.einsum("xi,yj,ij...->xy...", A, B, coef)

        W = tp(Cu, Cv, w)
        Wu, Wv = tp(dCu, Cv, w), tp(Cu, dCv, w)
        X = tp(Cu, Cv, wP)
        Xu, Xv = tp(dCu, Cv, wP), tp(Cu, dCv, wP)
        F = X / W[..., None]
        Fu = (Xu - F * Wu[..., None]) / W[..., None]
        Fv = (Xv - F * Wv[..., None]) / W[..., None]
        J = np.stack([Fu, Fv], axis=-1)
        return F, J, W, np.stack([Wu, Wv], axis=-1)

    def __call__(self, xi, eta):
        xi, eta = np.broadcast_arrays(np.asarray(xi, float), np.asarray(eta, float))
        out = np.empty(xi.shape + (2,))
        for idx in np.ndindex(xi.shape):
            F, _, _, _ = self.evaluate_grid([xi[idx]], [eta[idx]])
            out[idx] = F[0, 0]
        return out

    def jacobian(self, xi: float, eta: float) -> np.ndarray:
        _, J, _, _ = self.evaluate_grid([xi], [eta])
        return J[0, 0]


def quarter_annulus_geometry(r: float, R: float) -> GeometryMap:
    """Exact biquadratic NURBS parametrization of the quarter annulus.

    ``xi`` runs radially from radius ``r`` to ``R`` (linear, elevated to degree
    2), ``eta`` runs along the arc from the x-axis to the y-axis.
    """
    if not 0 < r < R:
        raise ValueError(f"need 0 < r < R, got r={r}, R={R}")
    kv = KnotVector(2, [0, 0, 0, 1, 1, 1])
    radii = np.array([r, 0.5 * (r + R), R])
    arc = np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    cp = radii[:, None, None] * arc[None, :, :]
    w_arc = np.array([1.0, np.sqrt(2.0) / 2.0, 1.0])
    weights = np.tile(w_arc, (3, 1))
    return GeometryMap(kv, kv, cp, weights)
