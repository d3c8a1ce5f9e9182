"""Compiled inner loops for the multiplicative smoothers.

All kernels act in place on ``x`` and follow the given visiting order
exactly, so results are deterministic.
"""
import numba as nb
import numpy as np

_opts = {"nogil": True, "cache": True}


@nb.njit(**_opts)
def gather_blocks(indptr, indices, data, bptr, bidx, fptr, out, pos):
    """Copy every local matrix ``A[B, B]`` (row-major) into ``out``."""
    for blk in range(bptr.size - 1):
        s, e = bptr[blk], bptr[blk + 1]
        nb_ = e - s
        for r in range(nb_):
            pos[bidx[s + r]] = r
        off = fptr[blk]
        for r in range(nb_):
            row = bidx[s + r]
            for jj in range(indptr[row], indptr[row + 1]):
                c = pos[indices[jj]]
                if c >= 0:
                    out[off + r * nb_ + c] = data[jj]
        for r in range(nb_):
            pos[bidx[s + r]] = -1


@nb.njit(**_opts)
def block_sweep(indptr, indices, data, x, b, order, bptr, bidx, fptr, L, res, y):
    """One multiplicative sweep over the blocks listed in ``order``.

    ``L`` holds the row-major Cholesky factor of each local matrix.
    """
    for k in range(order.size):
        blk = order[k]
        s, e = bptr[blk], bptr[blk + 1]
        nb_ = e - s
        for r in range(nb_):
            row = bidx[s + r]
            acc = b[row]
            for jj in range(indptr[row], indptr[row + 1]):
                acc -= data[jj] * x[indices[jj]]
            res[r] = acc
        off = fptr[blk]
        for r in range(nb_):
            acc = res[r]
            for c in range(r):
                acc -= L[off + r * nb_ + c] * y[c]
            y[r] = acc / L[off + r * nb_ + r]
        for r in range(nb_ - 1, -1, -1):
            acc = y[r]
            for c in range(r + 1, nb_):
                acc -= L[off + c * nb_ + r] * res[c]
            res[r] = acc / L[off + r * nb_ + r]
        for r in range(nb_):
            x[bidx[s + r]] += res[r]


@nb.njit(**_opts)
def gauss_seidel(indptr, indices, data, x, b):
    """Forward lexicographic Gauss-Seidel sweep."""
    n = x.size
    for i in range(n):
        acc = b[i]
        diag = 0.0
        for jj in range(indptr[i], indptr[i + 1]):
            j = indices[jj]
            if j == i:
                diag = data[jj]
            else:
                acc -= data[jj] * x[j]
        x[i] = acc / diag


def warmup():
    """Trigger compilation on a tiny problem."""
    indptr = np.array([0, 1], dtype=np.int32)
    indices = np.array([0], dtype=np.int32)
    data = np.array([1.0])
    x, b = np.zeros(1), np.ones(1)
    gauss_seidel(indptr, indices, data, x, b)
