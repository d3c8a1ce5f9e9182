"""Model problems: 1D and 2D Poisson on the unit interval/square and the
quarter annulus, together with their multigrid level data."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import assembly
from .multigrid import Hierarchy, SmootherSpec, build_hierarchy, build_prolongation_1d
from .splines import GeometryMap, SplineSpace, quarter_annulus_geometry

PROBLEMS = ("poisson1d", "poisson2d", "annulus")


@dataclass
class LinearSystem:
    """Assembled fine-level system plus everything needed to coarsen it."""

    problem: str
    p: int
    m: int
    A: sp.csr_matrix
    b: np.ndarray
    shapes: list  # dof grid per level, finest first
    prolongations: list  # prolongations[k]: level k+1 -> level k
    spaces: list = field(default_factory=list)  # finest-first 1D spaces per level
    geometry: GeometryMap | None = None

    @property
    def ndof(self) -> int:
        return self.A.shape[0]

    def hierarchy(self, smoother: SmootherSpec) -> Hierarchy:
        return build_hierarchy(self.A, self.shapes, self.prolongations, smoother)


def level_spaces(p: int, m: int, coarsest_m: int = 4) -> list[SplineSpace]:
    """Spaces with m, m/2, ... spans, halving while the result keeps >= coarsest_m spans."""
    if m < 2:
        raise ValueError(f"need m >= 2, got {m}")
    spaces = [SplineSpace.uniform(p, m)]
    while spaces[-1].m % 2 == 0 and spaces[-1].m // 2 >= coarsest_m:
        spaces.append(spaces[-1].coarsened())
    return spaces


def poisson1d(p: int, m: int, coarsest_m: int = 4) -> LinearSystem:
    spaces = level_spaces(p, m, coarsest_m)
    A = assembly.assemble_1d(spaces[0])
    b = assembly.assemble_rhs_1d(spaces[0], assembly.rhs_poisson1d)
    Ps = [build_prolongation_1d(f, c) for f, c in zip(spaces[:-1], spaces[1:])]
    shapes = [(s.dim,) for s in spaces]
    return LinearSystem("poisson1d", p, m, A, b, shapes, Ps, spaces)


def poisson2d(p: int, m: int, coarsest_m: int = 4) -> LinearSystem:
    spaces = level_spaces(p, m, coarsest_m)
    s = spaces[0]
    A = assembly.assemble_2d_parametric(s, s)
    b = assembly.assemble_rhs_2d(s, s, assembly.rhs_poisson2d)
    Ps = []
    for f, c in zip(spaces[:-1], spaces[1:]):
        P1 = build_prolongation_1d(f, c)
        Ps.append(sp.kron(P1, P1, format="csr"))
    shapes = [(t.dim, t.dim) for t in spaces]
    return LinearSystem("poisson2d", p, m, A, b, shapes, Ps, spaces)


def nurbs_prolongation(fine: SplineSpace, coarse: SplineSpace, geometry: GeometryMap) -> sp.csr_matrix:
    """Prolongation between NURBS spaces sharing the geometry's weight function.

    ``w_c N_c / W = sum_f P_fc (w_c / w_f) (w_f N_f / W)``, so the B-spline
    prolongation is rescaled by the refined dof weights.
    """
    P1 = build_prolongation_1d(fine, coarse)
    P = sp.kron(P1, P1, format="csr")
    wf = assembly.nurbs_dof_weights(fine, fine, geometry).ravel()
    wc = assembly.nurbs_dof_weights(coarse, coarse, geometry).ravel()
    return (sp.diags(1.0 / wf) @ P @ sp.diags(wc)).tocsr()


def annulus(p: int, m: int, r: float = 0.3, R: float = 0.5, coarsest_m: int = 4) -> LinearSystem:
    geo = quarter_annulus_geometry(r, R)
    spaces = level_spaces(p, m, coarsest_m)
    s = spaces[0]
    A = assembly.assemble_2d_mapped(s, s, geo)

    def f(x, y):
        return assembly.rhs_annulus(x, y, r, R)

    b = assembly.assemble_rhs_2d(s, s, f, geometry=geo)
    Ps = [nurbs_prolongation(fi, co, geo) for fi, co in zip(spaces[:-1], spaces[1:])]
    shapes = [(t.dim, t.dim) for t in spaces]
    return LinearSystem("annulus", p, m, A, b, shapes, Ps, spaces, geo)


def build_problem(problem: str, p: int, m: int, **kw) -> LinearSystem:
    if problem == "poisson1d":
        return poisson1d(p, m, **kw)
    if problem == "poisson2d":
        return poisson2d(p, m, **kw)
    if problem == "annulus":
        return annulus(p, m, **kw)
    raise ValueError(f"unknown problem {problem!r}; choose from {PROBLEMS}")
