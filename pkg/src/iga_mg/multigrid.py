"""Geometric multigrid with Gauss-Seidel or overlapping multiplicative Schwarz
smoothers for nested spline spaces.

Transfers are the exact spline-embedding prolongation ``P`` and its transpose;
coarse operators are ``P^T A P``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from . import _kernels
from .splines import SplineSpace, knot_insertion_matrix

SMOOTHERS = ("gauss_seidel", "schwarz", "colored_schwarz")


@dataclass(frozen=True)
class SmootherSpec:
    """Smoother choice; ``block`` is the block width per direction (odd)."""

    kind: str = "colored_schwarz"
    block: int | None = 3
    colors: int = 3

    def __post_init__(self):
        if self.kind not in SMOOTHERS:
            raise ValueError(f"unknown smoother {self.kind!r}; choose from {SMOOTHERS}")
        if self.kind != "gauss_seidel":
            if self.block is None or self.block < 3 or self.block % 2 == 0:
                raise ValueError(f"Schwarz block size must be odd and >= 3, got {self.block}")


@dataclass(frozen=True)
class CycleSpec:
    cycle: str = "V"
    nu1: int = 1
    nu2: int = 0
    coarsest_m: int = 4

    def __post_init__(self):
        if self.cycle not in ("V", "W"):
            raise ValueError(f"cycle must be 'V' or 'W', got {self.cycle!r}")
        if self.nu1 < 0 or self.nu2 < 0 or self.nu1 + self.nu2 < 1:
            raise ValueError("need nu1, nu2 >= 0 and nu1 + nu2 >= 1")

    @property
    def gamma(self) -> int:
        return 1 if self.cycle == "V" else 2


@dataclass
class SolveReport:
    iterations: int
    residuals: list
    rho: float
    wall_time: float
    converged: bool

    @property
    def reduction(self) -> float:
        return self.residuals[-1] / self.residuals[0]


# --- transfer operators ---------------------------------------------------------


def build_prolongation_1d(fine: SplineSpace, coarse: SplineSpace) -> sp.csr_matrix:
    """Exact embedding of the coarse spline space into the fine one (interior dofs)."""
    if fine.p != coarse.p:
        raise ValueError(f"degree mismatch: {fine.p} vs {coarse.p}")
    if fine.m != 2 * coarse.m:
        raise ValueError(f"fine mesh must halve the coarse one (m={fine.m} vs {coarse.m})")
    T = knot_insertion_matrix(coarse.knot_vector, fine.knot_vector)
    return sp.csr_matrix(T[1:-1, 1:-1])


def galerkin_coarsen(A_fine: sp.spmatrix, P: sp.spmatrix) -> sp.csr_matrix:
    if A_fine.shape[0] != P.shape[0]:
        raise ValueError(f"dimension mismatch: A is {A_fine.shape}, P is {P.shape}")
    Ac = (P.T @ A_fine @ P).tocsr()
    # symmetrise away round-off so coarse blocks stay exactly symmetric
    Ac = ((Ac + Ac.T) * 0.5).tocsr()
    Ac.sort_indices()
    return Ac


# --- blocks and orderings --------------------------------------------------------------


def build_blocks(shape, n: int) -> list[np.ndarray]:
    """One block of width ``n`` per direction centred at every dof, clipped at the boundary.

    ``shape`` is the dof grid, ``(N,)`` in 1D or ``(Nu, Nv)`` in 2D; indices are
    flat row-major.
    """
    if n < 1 or n % 2 == 0:
        raise ValueError(f"block size must be odd, got {n}")
    shape = tuple(int(s) for s in shape)
    hw = (n - 1) // 2
    ranges = [[np.arange(max(0, c - hw), min(s, c + hw + 1)) for c in range(s)] for s in shape]
    if len(shape) == 1:
        return ranges[0]
    if len(shape) != 2:
        raise ValueError("only 1D and 2D grids are supported")
    nv = shape[1]
    return [
        (ri[:, None] * nv + rj[None, :]).ravel()
        for ri in ranges[0]
        for rj in ranges[1]
    ]


def colored_order(shape, colors: int = 3) -> list[np.ndarray]:
    """Colour classes of the block centres: ``i mod colors`` in 1D, ``(i mod c, j mod c)`` in 2D.

    Classes are returned in processing order; within a class, ascending index.
    """
    shape = tuple(int(s) for s in shape)
    idx = np.arange(int(np.prod(shape)))
    if len(shape) == 1:
        return [idx[idx % colors == c] for c in range(colors)]
    i, j = np.divmod(idx, shape[1])
    return [idx[(i % colors == ci) & (j % colors == cj)] for ci in range(colors) for cj in range(colors)]


def block_size_for_degree(p: int, d: int = 1) -> int:
    """Block width per direction used for degree ``p`` (the block is n x n in 2D)."""
    if not 2 <= p <= 8:
        raise ValueError(f"no default block size for p={p}; give it explicitly")
    if p <= 3:
        return 3
    if p <= 5:
        return 5
    return 7


# --- smoothers ---------------------------------------------------------------------------


class BlockSmoother:
    """Multiplicative Schwarz sweep with precomputed Cholesky factors of ``A[B, B]``."""

    def __init__(self, A: sp.csr_matrix, blocks: list[np.ndarray], order: np.ndarray | None = None):
        A = sp.csr_matrix(A)
        A.sort_indices()
        self.A = A
        self.indptr = A.indptr.astype(np.int64)
        self.indices = A.indices.astype(np.int64)
        self.data = A.data.astype(float)
        n = A.shape[0]
        sizes = np.array([len(b) for b in blocks], dtype=np.int64)
        if len(blocks) == 0:
            raise ValueError("no blocks")
        self.bidx = np.concatenate(blocks).astype(np.int64)
        if self.bidx.min() < 0 or self.bidx.max() >= n:
            raise ValueError("block index out of range")
        if np.unique(self.bidx).size != n:
            raise ValueError("blocks do not cover every unknown")
        self.bptr = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self.fptr = np.concatenate([[0], np.cumsum(sizes**2)]).astype(np.int64)
        local = np.zeros(self.fptr[-1])
        pos = -np.ones(n, dtype=np.int64)
        _kernels.gather_blocks(self.indptr, self.indices, self.data, self.bptr, self.bidx, self.fptr, local, pos)
        L = np.empty_like(local)
        for s in np.unique(sizes):
            which = np.flatnonzero(sizes == s)
            offs = self.fptr[which][:, None] + np.arange(s * s)[None, :]
            mats = local[offs].reshape(-1, s, s)
            try:
                L[offs] = np.linalg.cholesky(mats).reshape(len(which), -1)
            except np.linalg.LinAlgError as exc:
                raise np.linalg.LinAlgError("a local block matrix is not positive definite") from exc
        self.L = L
        self.order = np.arange(len(blocks), dtype=np.int64) if order is None else np.asarray(order, dtype=np.int64)
        self.nblocks = len(blocks)
        smax = int(sizes.max())
        self._res = np.empty(smax)
        self._y = np.empty(smax)

    def cholesky_factor(self, k: int) -> np.ndarray:
        s = self.bptr[k + 1] - self.bptr[k]
        return self.L[self.fptr[k] : self.fptr[k + 1]].reshape(s, s)

    def block(self, k: int) -> np.ndarray:
        return self.bidx[self.bptr[k] : self.bptr[k + 1]]

    def sweep(self, x: np.ndarray, b: np.ndarray) -> np.ndarray:
        _kernels.block_sweep(
            self.indptr, self.indices, self.data, x, b, self.order,
            self.bptr, self.bidx, self.fptr, self.L, self._res, self._y,
        )
        return x


class GaussSeidelSmoother:
    def __init__(self, A: sp.csr_matrix):
        A = sp.csr_matrix(A)
        A.sort_indices()
        self.A = A
        self.indptr = A.indptr.astype(np.int64)
        self.indices = A.indices.astype(np.int64)
        self.data = A.data.astype(float)

    def sweep(self, x: np.ndarray, b: np.ndarray) -> np.ndarray:
        _kernels.gauss_seidel(self.indptr, self.indices, self.data, x, b)
        return x


def make_smoother(A: sp.csr_matrix, shape, spec: SmootherSpec):
    if spec.kind == "gauss_seidel":
        return GaussSeidelSmoother(A)
    blocks = build_blocks(shape, spec.block)
    order = None
    if spec.kind == "colored_schwarz":
        order = np.concatenate(colored_order(shape, spec.colors))
    return BlockSmoother(A, blocks, order)


def gauss_seidel_sweep(level: "Level", x: np.ndarray, b: np.ndarray) -> np.ndarray:
    return GaussSeidelSmoother(level.A).sweep(x, b)


def schwarz_sweep(level: "Level", x: np.ndarray, b: np.ndarray, order=None) -> np.ndarray:
    sm = level.smoother
    if not isinstance(sm, BlockSmoother):
        raise TypeError("level has no Schwarz smoother")
    if order is None:
        return sm.sweep(x, b)
    saved = sm.order
    sm.order = np.asarray(order, dtype=np.int64)
    try:
        return sm.sweep(x, b)
    finally:
        sm.order = saved


def schwarz_operator(A, blocks, order=None) -> np.ndarray:
    """Dense error propagation matrix ``prod_B (I - V_B^T A_B^{-1} V_B A)``, in sweep order."""
    A = np.asarray(A.toarray() if sp.issparse(A) else A, dtype=float)
    n = A.shape[0]
    order = range(len(blocks)) if order is None else order
    E = np.eye(n)
    for k in order:
        B = blocks[k]
        V = np.zeros((len(B), n))
        V[np.arange(len(B)), B] = 1.0
        E = (np.eye(n) - V.T @ np.linalg.solve(A[np.ix_(B, B)], V @ A)) @ E
    return E


# --- hierarchy and cycles --------------------------------------------------------------


@dataclass
class Level:
    A: sp.csr_matrix
    shape: tuple
    P: sp.csr_matrix | None = None  # prolongation from the next coarser level
    smoother: object = None
    coarse_factor: tuple | None = field(default=None, repr=False)

    def smooth(self, x, b):
        return self.smoother.sweep(x, b)


@dataclass
class Hierarchy:
    levels: list

    @property
    def nlevels(self) -> int:
        return len(self.levels)

    @property
    def finest(self) -> Level:
        return self.levels[0]


def build_hierarchy(A: sp.spmatrix, shapes: list, prolongations: list, smoother: SmootherSpec) -> Hierarchy:
    """Galerkin hierarchy; ``prolongations[k]`` maps level ``k+1`` to level ``k``."""
    if len(shapes) != len(prolongations) + 1:
        raise ValueError("need one prolongation per coarsening step")
    A = sp.csr_matrix(A)
    A.sort_indices()
    levels = []
    for k, shape in enumerate(shapes):
        last = k == len(shapes) - 1
        lvl = Level(A, tuple(shape))
        if last:
            lvl.coarse_factor = scipy.linalg.cho_factor(A.toarray())
        else:
            lvl.P = sp.csr_matrix(prolongations[k])
            lvl.smoother = make_smoother(A, shape, smoother)
            A = galerkin_coarsen(A, lvl.P)
        levels.append(lvl)
    return Hierarchy(levels)


def cycle(h: Hierarchy, k: int, x: np.ndarray, b: np.ndarray, spec: CycleSpec) -> np.ndarray:
    """One V (gamma=1) or W (gamma=2) cycle on level ``k``; updates ``x`` in place."""
    lvl = h.levels[k]
    if lvl.coarse_factor is not None:
        x[:] = scipy.linalg.cho_solve(lvl.coarse_factor, b)
        return x
    for _ in range(spec.nu1):
        lvl.smooth(x, b)
    r = b - lvl.A @ x
    rc = lvl.P.T @ r
    ec = np.zeros(rc.shape[0])
    nxt = h.levels[k + 1]
    for _ in range(1 if nxt.coarse_factor is not None else spec.gamma):
        cycle(h, k + 1, ec, rc, spec)
    x += lvl.P @ ec
    for _ in range(spec.nu2):
        lvl.smooth(x, b)
    return x


def _geomean_tail(ratios, k=5) -> float:
    tail = np.asarray(ratios[-k:], dtype=float)
    if tail.size == 0:
        return float("nan")
    if np.any(tail <= 0):
        return 0.0
    return float(np.exp(np.mean(np.log(tail))))


def solve(
    h: Hierarchy,
    b: np.ndarray,
    spec: CycleSpec = CycleSpec(),
    seed: int = 42,
    tol: float = 1e-8,
    maxiter: int = 200,
    x0: np.ndarray | None = None,
) -> SolveReport:
    """Iterate cycles from a seeded uniform random guess until ``|r_k| <= tol |r_0|``."""
    A = h.finest.A
    rng = np.random.default_rng(seed)
    x = rng.random(A.shape[0]) if x0 is None else np.array(x0, dtype=float)
    t0 = time.perf_counter()
    res = [float(np.linalg.norm(b - A @ x))]
    converged = res[0] == 0.0
    it = 0
    while not converged and it < maxiter:
        cycle(h, 0, x, b, spec)
        it += 1
        res.append(float(np.linalg.norm(b - A @ x)))
        converged = res[-1] <= tol * res[0]
        if not np.isfinite(res[-1]):
            break
    ratios = [res[i + 1] / res[i] for i in range(len(res) - 1) if res[i] > 0]
    report = SolveReport(it, res, _geomean_tail(ratios), time.perf_counter() - t0, converged)
    report.x = x
    return report


@dataclass
class FactorEstimate:
    rho: float
    iterations: int
    ratios: list
    reliable: bool


def measured_asymptotic_factor(
    h: Hierarchy,
    spec: CycleSpec = CycleSpec(),
    seed: int = 42,
    tol: float = 1e-10,
    min_iter: int = 20,
    maxiter: int = 3000,
) -> FactorEstimate:
    """Asymptotic residual reduction per cycle for ``A x = 0``.

    The iterate is rescaled to unit residual after every cycle, so the run can
    continue past ``tol`` without underflow; the result is the geometric mean of
    the last five reduction ratios.
    """
    A = h.finest.A
    rng = np.random.default_rng(seed)
    x = rng.random(A.shape[0])
    b = np.zeros_like(x)
    rn = np.linalg.norm(A @ x)
    x /= rn
    ratios = []
    total = 1.0
    while len(ratios) < maxiter:
        cycle(h, 0, x, b, spec)
        rn = float(np.linalg.norm(A @ x))
        ratios.append(rn)
        total *= rn
        if rn == 0.0:
            break
        x /= rn
        if total <= tol and len(ratios) >= min_iter:
            break
    return FactorEstimate(_geomean_tail(ratios), len(ratios), ratios, len(ratios) >= 8)
