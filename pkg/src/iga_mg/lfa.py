"""Local Fourier analysis for 1D IGA multigrid: operator symbols, Gauss-Seidel
and overlapping multiplicative Schwarz smoother symbols, smoothing factors and
two-/three-grid convergence factors.

Frequencies are dimensionless (``h = 1``): ``theta`` in (-pi, pi], low
frequencies in (-pi/2, pi/2].
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from .assembly import Stencil1D, mass_stencil, stiffness_stencil
from .multigrid import build_prolongation_1d
from .splines import SplineSpace


def _theta(theta):
    return np.asarray(theta, dtype=float)


def _coeff(a: np.ndarray, j: int) -> float:
    j = abs(j)
    return float(a[j]) if j < len(a) else 0.0


# --- operator symbols ------------------------------------------------------------


def operator_symbol_1d(stencil: Stencil1D, theta):
    """``a_0 + 2 sum_j a_j cos(j theta)``."""
    t = _theta(theta)
    a = np.asarray(stencil.coeffs)
    out = np.full(t.shape, a[0], dtype=float)
    for j in range(1, len(a)):
        out = out + 2 * a[j] * np.cos(j * t)
    return out


def operator_symbol_2d(p: int, theta1, theta2):
    """Symbol of the tensor-product stiffness operator ``K (x) M + M (x) K``."""
    K, M = stiffness_stencil(p), mass_stencil(p)
    t1, t2 = _theta(theta1), _theta(theta2)
    return (operator_symbol_1d(K, t1) * operator_symbol_1d(M, t2)
            + operator_symbol_1d(M, t1) * operator_symbol_1d(K, t2))


class SingularSample(ArithmeticError):
    pass


def gs_symbol(stencil: Stencil1D, theta, flag_tol: float = 1e-14):
    """Forward lexicographic Gauss-Seidel: ``-A_minus / A_plus``."""
    t = _theta(theta)
    a = np.asarray(stencil.coeffs)
    plus = np.full(t.shape, a[0], dtype=complex)
    minus = np.zeros(t.shape, dtype=complex)
    for j in range(1, len(a)):
        plus = plus + a[j] * np.exp(-1j * j * t)
        minus = minus + a[j] * np.exp(1j * j * t)
    if np.any(np.abs(plus) < flag_tol):
        raise SingularSample("Gauss-Seidel splitting symbol vanishes")
    return -minus / plus


# --- overlapping Schwarz --------------------------------------------------------------


@dataclass
class SchwarzSymbolSystem:
    """``P alpha = Q alpha_0`` for the intermediate error coefficients of one sweep.

    Row ``k`` is the local equation of block offset ``k - h`` (``h = (n-1)/2``);
    column ``c`` multiplies the coefficient after ``c + 1`` updates. ``P`` factors
    as ``Pbar @ diag(D_P)`` with ``Pbar`` holding plain stencil entries outside
    the last column.
    """

    n: int
    theta: float
    Pbar: np.ndarray
    D_P: np.ndarray
    Q: np.ndarray

    @property
    def P(self) -> np.ndarray:
        return self.Pbar * self.D_P[None, :]

    def amplification(self) -> complex:
        return complex(np.linalg.solve(self.P, self.Q)[-1])


def _schwarz_parts(stencil: Stencil1D, n: int, theta: np.ndarray):
    """Batched ``Pbar`` (T, n, n), ``D_P`` (T, n) and ``Q`` (T, n)."""
    if n < 1 or n % 2 == 0:
        raise ValueError(f"block size must be odd, got {n}")
    a = np.asarray(stencil.coeffs)
    p = len(a) - 1
    h = (n - 1) // 2
    t = np.atleast_1d(theta)
    T = t.size
    Pbar = np.zeros((T, n, n), dtype=complex)
    D = np.ones((T, n), dtype=complex)
    Q = np.zeros((T, n), dtype=complex)
    for r in range(n):
        k = r - h
        for c in range(1, n):
            Pbar[:, r, c - 1] = _coeff(a, k - (h + 1 - c))
        # fully updated coefficient: the leftmost block unknown plus everything left of the block
        last = np.zeros(T, dtype=complex)
        last += _coeff(a, k + h)
        for d in range(-h - p - 1, -h):
            if abs(d - k) <= p:
                last += _coeff(a, d - k) * np.exp(1j * (d + h) * t)
        Pbar[:, r, n - 1] = last * np.exp(-1j * h * t)
        # untouched coefficient: unknowns right of the block
        for d in range(h + 1, h + p + 1 + abs(k) + 1):
            if 0 < d - k <= p:
                Q[:, r] -= _coeff(a, d - k) * np.exp(1j * d * t)
    for c in range(1, n):
        D[:, c - 1] = np.exp(1j * (h + 1 - c) * t)
    return Pbar, D, Q


def schwarz_PQ(stencil: Stencil1D, n: int, theta: float) -> SchwarzSymbolSystem:
    Pbar, D, Q = _schwarz_parts(stencil, n, np.array([float(theta)]))
    return SchwarzSymbolSystem(n, float(theta), Pbar[0], D[0], Q[0])


def schwarz_symbol(stencil: Stencil1D, n: int, theta, cond_tol: float = 1e12, return_mask: bool = False):
    """Last component of ``P^{-1} Q`` for every ``theta``.

    Samples where ``P`` is numerically singular are set to NaN; with
    ``return_mask`` the boolean mask of valid samples is returned too.
    """
    t = _theta(theta)
    flat = np.atleast_1d(t).ravel()
    Pbar, D, Q = _schwarz_parts(stencil, n, flat)
    P = Pbar * D[:, None, :]
    cond = np.linalg.cond(P)
    ok = np.isfinite(cond) & (cond < cond_tol)
    out = np.full(flat.shape, np.nan, dtype=complex)
    if np.any(ok):
        out[ok] = np.linalg.solve(P[ok], Q[ok][..., None])[:, -1, 0]
    out = out.reshape(t.shape)
    if return_mask:
        return out, ok.reshape(t.shape)
    return out


# --- smoother choice ----------------------------------------------------------------------


@dataclass(frozen=True)
class LfaSmoother:
    kind: str  # "gs" or "schwarz"
    n: int | None = None

    def __post_init__(self):
        if self.kind not in ("gs", "schwarz"):
            raise ValueError(f"LFA supports 'gs' and 'schwarz', got {self.kind!r}")
        if self.kind == "schwarz" and (self.n is None or self.n < 1 or self.n % 2 == 0):
            raise ValueError(f"Schwarz block size must be odd, got {self.n}")

    def symbol(self, stencil: Stencil1D, theta):
        if self.kind == "gs":
            return gs_symbol(stencil, theta)
        return schwarz_symbol(stencil, self.n, theta)

    @property
    def label(self) -> str:
        return "gs" if self.kind == "gs" else f"schwarz{self.n}"


def low_grid(n_theta: int = 256, width: float = np.pi / 2) -> np.ndarray:
    """Equispaced samples of (-width, width] offset by half a step (avoids 0)."""
    k = np.arange(n_theta)
    return -width + (k + 0.5) * (2 * width / n_theta)


def harmonic(theta0):
    """2h-harmonic partner ``theta0 - sign(theta0) pi``."""
    t = _theta(theta0)
    return t - np.sign(t) * np.pi


def harmonics_4h(theta0):
    """The four 4h-harmonics ``theta^alpha_beta`` ordered (00, 01, 10, 11)."""
    t = _theta(theta0)
    s = np.sign(t)
    out = []
    for alpha in (0, 1):
        for beta in (0, 1):
            out.append(t - alpha * s * np.pi / 2 + (-1) ** (alpha + beta) * beta * s * np.pi)
    return np.stack(out, axis=-1)


def smoothing_factor(symbol, n_theta: int = 256) -> float:
    """``max |S(theta)|`` over the high frequencies.

    ``symbol`` is a vectorised callable of ``theta``.
    """
    if n_theta < 64:
        raise ValueError("use at least 64 samples")
    high = harmonic(low_grid(n_theta))
    vals = np.abs(np.asarray(symbol(high)))
    vals = vals[np.isfinite(vals)]
    return float(vals.max()) if vals.size else float("nan")


# --- transfers and coarse-grid analysis -------------------------------------------------


@lru_cache(maxsize=None)
def prolongation_mask(p: int) -> np.ndarray:
    """Interior column of the spline prolongation (length p + 2)."""
    coarse = SplineSpace.uniform(p, 4 * p + 4)
    fine = SplineSpace.uniform(p, 2 * coarse.m)
    P = build_prolongation_1d(fine, coarse).toarray()
    col = P[:, coarse.dim // 2]
    nz = np.flatnonzero(np.abs(col) > 1e-15)
    mask = col[nz[0] : nz[-1] + 1]
    if len(mask) != p + 2:
        raise ValueError("mask extraction failed")
    mask.setflags(write=False)
    return mask


def transfer_symbols(p: int, theta):
    """``(P(theta), R(theta))`` with ``P = sum_k c_k e^{-i k theta}`` about the mask centre
    and ``R = conj(P)``."""
    c = prolongation_mask(p)
    t = _theta(theta)
    k = np.arange(len(c)) - (len(c) - 1) / 2
    Ph = np.tensordot(np.exp(-1j * np.multiply.outer(t, k)), c, axes=([-1], [0]))
    return Ph, np.conj(Ph)


def coarse_symbol(stencil: Stencil1D, theta0):
    """Galerkin coarse symbol ``sum_a R(t_a) A(t_a) P(t_a) / 2`` at coarse frequency ``2 theta0``."""
    t0 = _theta(theta0)
    total = 0.0
    for t in (t0, harmonic(t0)):
        Ph, Rh = transfer_symbols(stencil.p, t)
        total = total + 0.5 * (Rh * operator_symbol_1d(stencil, t) * Ph)
    return total


def _powers(S, nu):
    out = np.ones_like(S)
    for _ in range(nu):
        out = out * S
    return out


def two_grid_symbol(stencil: Stencil1D, smoother: LfaSmoother, theta0, nu1: int = 1, nu2: int = 0):
    """Batched 2x2 two-grid representations on ``span{theta0, theta1}``.

    Returns ``(M, ok)`` where samples with a vanishing coarse symbol are NaN and
    ``ok`` is False.
    """
    t0 = np.atleast_1d(_theta(theta0))
    ts = np.stack([t0, harmonic(t0)], axis=-1)  # (T, 2)
    A = operator_symbol_1d(stencil, ts)
    S = smoother.symbol(stencil, ts)
    Ph, Rh = transfer_symbols(stencil.p, ts)
    Ac = coarse_symbol(stencil, t0)
    ok = (np.abs(Ac) > 1e-14) & np.all(np.isfinite(S), axis=-1)
    Acs = np.where(ok, Ac, 1.0)
    # K = I - P Ac^{-1} R A
    K = np.eye(2)[None] - (0.5 * Ph)[:, :, None] * (Rh * A)[:, None, :] / Acs[:, None, None]
    M = _powers(S, nu2)[:, :, None] * K * _powers(S, nu1)[:, None, :]
    M[~ok] = np.nan
    return M, ok


def three_grid_symbol(stencil: Stencil1D, smoother: LfaSmoother, theta0, nu1: int = 1, nu2: int = 0, gamma: int = 1):
    """Batched 4x4 three-grid representations on the 4h-harmonics of ``theta0``."""
    t0 = np.atleast_1d(_theta(theta0))
    ts = harmonics_4h(t0)  # (T, 4) ordered 00, 01, 10, 11
    A = operator_symbol_1d(stencil, ts)
    S = smoother.symbol(stencil, ts)
    Ph, Rh = transfer_symbols(stencil.p, ts)
    T = len(t0)
    # fine -> coarse: coarse mode alpha collects the pair (alpha, 0), (alpha, 1)
    Pm = np.zeros((T, 4, 2), dtype=complex)
    Rm = np.zeros((T, 2, 4), dtype=complex)
    for alpha in (0, 1):
        for beta in (0, 1):
            i = 2 * alpha + beta
            Pm[:, i, alpha] = 0.5 * Ph[:, i]
            Rm[:, alpha, i] = Rh[:, i]
    # coarse frequencies 2*theta^alpha_0 form a 2h-harmonic pair on the coarse grid
    phi = 2 * ts[:, [0, 2]]
    Ac = np.stack([coarse_symbol(stencil, ts[:, 0]), coarse_symbol(stencil, ts[:, 2])], axis=-1)
    # the Galerkin coarse operator is the fine stencil / 2 (nestedness); its smoother symbol is unchanged
    coarse = Stencil1D(stencil.p, np.asarray(stencil.coeffs) * 0.5)
    M2, ok2 = two_grid_symbol(coarse, smoother, phi[:, 0], nu1, nu2)
    ok = ok2 & np.all(np.abs(Ac) > 1e-14, axis=-1) & np.all(np.isfinite(S), axis=-1)
    Acs = np.where(np.abs(Ac) > 1e-14, Ac, 1.0)
    I2 = np.eye(2)[None]
    M2s = np.where(ok[:, None, None], M2, 0.0)
    inner = I2 - np.linalg.matrix_power(M2s, gamma)
    C = Pm @ (inner / Acs[:, None, :]) @ Rm * A[:, None, :]
    K = np.eye(4)[None] - C
    M = _powers(S, nu2)[:, :, None] * K * _powers(S, nu1)[:, None, :]
    M[~ok] = np.nan
    return M, ok


def _sup_radius(M, ok, max_skip: float = 0.05):
    if ok.mean() < 1 - max_skip:
        raise ArithmeticError(f"{(~ok).mean():.1%} of the samples were skipped; analysis unreliable")
    ev = np.linalg.eigvals(M[ok])
    return float(np.abs(ev).max())


def rho_2g(stencil: Stencil1D, smoother: LfaSmoother, nu1=1, nu2=0, n_theta: int = 256) -> float:
    if n_theta < 128:
        raise ValueError("use at least 128 samples")
    M, ok = two_grid_symbol(stencil, smoother, low_grid(n_theta), nu1, nu2)
    return _sup_radius(M, ok)


def rho_3g(stencil: Stencil1D, smoother: LfaSmoother, nu1=1, nu2=0, gamma: int = 1, n_theta: int = 256) -> float:
    if n_theta < 128:
        raise ValueError("use at least 128 samples")
    M, ok = three_grid_symbol(stencil, smoother, low_grid(n_theta, np.pi / 4), nu1, nu2, gamma)
    return _sup_radius(M, ok)


# --- reports ---------------------------------------------------------------------------


@dataclass
class LfaReport:
    p: int
    smoother: str
    nu1: int
    nu2: int
    mu: float
    rho_2g: float
    rho_3g_V: float
    rho_3g_W: float
    theta: list = field(default_factory=list, repr=False)
    symbol_abs: list = field(default_factory=list, repr=False)

    def factors(self) -> dict:
        d = asdict(self)
        d.pop("theta")
        d.pop("symbol_abs")
        return d

    def to_json(self) -> str:
        return json.dumps(self.factors(), indent=2)

    def write_curve_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["theta", "abs_symbol"])
            for t, s in zip(self.theta, self.symbol_abs):
                w.writerow([f"{t:.10f}", f"{s:.10e}"])


def analyse(p: int, smoother: LfaSmoother, nu1: int = 1, nu2: int = 0, n_theta: int = 256) -> LfaReport:
    """Smoothing, two-grid and three-grid (V and W) factors for degree ``p``."""
    A = stiffness_stencil(p)
    mu = smoothing_factor(lambda t: smoother.symbol(A, t), n_theta)
    theta = np.linspace(-np.pi, np.pi, 2 * n_theta + 1)[1:]
    curve = np.abs(smoother.symbol(A, theta))
    return LfaReport(
        p,
        smoother.label,
        nu1,
        nu2,
        mu,
        rho_2g(A, smoother, nu1, nu2, n_theta),
        rho_3g(A, smoother, nu1, nu2, 1, n_theta),
        rho_3g(A, smoother, nu1, nu2, 2, n_theta),
        theta.tolist(),
        curve.tolist(),
    )
