import json
from fractions import Fraction
from math import comb, factorial

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iga_mg import lfa
from iga_mg.assembly import Stencil1D, stiffness_stencil
from iga_mg.lfa import (
    LfaSmoother,
    analyse,
    coarse_symbol,
    gs_symbol,
    harmonic,
    harmonics_4h,
    low_grid,
    operator_symbol_1d,
    operator_symbol_2d,
    rho_2g,
    rho_3g,
    schwarz_PQ,
    schwarz_symbol,
    smoothing_factor,
    transfer_symbols,
    two_grid_symbol,
)

low = st.floats(-np.pi / 2 + 1e-3, np.pi / 2, allow_nan=False).filter(lambda t: abs(t) > 1e-3)
freq = st.floats(-np.pi + 1e-6, np.pi, allow_nan=False)


def periodic_matrix(stencil, N):
    a = np.asarray(stencil.coeffs)
    A = np.zeros((N, N))
    for i in range(N):
        for j in range(-stencil.p, stencil.p + 1):
            A[i, (i + j) % N] = a[abs(j)]
    return A


def periodic_sweep_ratio(stencil, n, theta, N=256):
    """Apply one periodic block sweep to e^{i j theta}; ratio read off mid-grid.

    The sweep starts at index 0, so the start-up transient decays geometrically
    away from it; N = 256 leaves it far below round-off at the midpoint.
    """
    A = periodic_matrix(stencil, N)
    h = (n - 1) // 2
    e = np.exp(1j * theta * np.arange(N))
    for c in range(N):
        B = np.arange(c - h, c + h + 1) % N
        r = -(A[B] @ e)
        e[B] += np.linalg.solve(A[np.ix_(B, B)], r)
    j = N // 2
    return e[j] / np.exp(1j * theta * j)


def exact_stencil(p):
    """Rational stiffness stencil from centred cardinal B-spline values."""

    def M(k, x):
        x, s = Fraction(x), Fraction(0)
        for j in range(k + 2):
            t = x + Fraction(k + 1, 2) - j
            if t > 0:
                s += (-1) ** j * comb(k + 1, j) * t**k
        return s / factorial(k)

    return [-(M(2 * p - 1, j + 1) - 2 * M(2 * p - 1, j) + M(2 * p - 1, j - 1)) for j in range(p + 1)]


# --- operator symbols --------------------------------------------------------------------


@settings(max_examples=50)
@given(freq)
def test_quadratic_operator_symbol(t):
    expected = 2 / 3 * (2 - np.cos(t) * (1 + np.cos(t)))
    assert operator_symbol_1d(stiffness_stencil(2), t) == pytest.approx(expected, abs=1e-13)


def test_quadratic_symbol_at_pi():
    assert operator_symbol_1d(stiffness_stencil(2), np.pi) == pytest.approx(4 / 3, abs=1e-14)


@pytest.mark.parametrize("p", range(1, 9))
def test_symbol_vanishes_at_zero(p):
    assert abs(operator_symbol_1d(stiffness_stencil(p), 0.0)) <= 1e-12
    t = np.linspace(0.01, np.pi, 50)
    assert np.all(operator_symbol_1d(stiffness_stencil(p), t) > 0)


@settings(max_examples=30)
@given(freq, freq)
def test_2d_symbol_symmetric(t1, t2):
    for p in (2, 5):
        assert operator_symbol_2d(p, t1, t2) == pytest.approx(operator_symbol_2d(p, t2, t1), rel=1e-12, abs=1e-14)
    assert operator_symbol_2d(3, 0.0, 0.0) == pytest.approx(0.0, abs=1e-13)


def test_2d_symbol_small_high_frequency_values():
    t = np.linspace(-np.pi, np.pi, 129)[1:]
    T1, T2 = np.meshgrid(t, t)
    high = (np.abs(T1) > np.pi / 2) | (np.abs(T2) > np.pi / 2)
    ratio = {}
    for p in (2, 5):
        vals = operator_symbol_2d(p, T1, T2)
        ratio[p] = np.mean(vals[high] < 0.05 * vals.max())
    assert ratio[5] > ratio[2]
    assert ratio[5] > 0.05


# --- Gauss-Seidel --------------------------------------------------------------------------


def test_gs_symbol_at_pi_quadratic():
    assert gs_symbol(stiffness_stencil(2), np.pi) == pytest.approx(-1 / 7, abs=1e-14)


def test_gs_singular_splitting_flagged():
    with pytest.raises(lfa.SingularSample):
        gs_symbol(Stencil1D(1, np.array([1.0, 1.0])), np.pi)


@pytest.mark.parametrize("p,expected", [(2, 0.31), (4, 0.38)])
def test_gs_smoothing_factor(p, expected):
    mu = smoothing_factor(lambda t: gs_symbol(stiffness_stencil(p), t))
    assert mu == pytest.approx(expected, abs=0.01)


@pytest.mark.parametrize("p", [6, 7, 8])
def test_gs_supremum_is_closed_form_at_pi(p):
    # the supremum sits at theta = pi, where S = (a_0 - A(pi)) / (a_0 + A(pi))
    a = exact_stencil(p)
    Api = a[0] + 2 * sum((-1) ** j * a[j] for j in range(1, p + 1))
    closed = float((a[0] - Api) / (a[0] + Api))
    mu = smoothing_factor(lambda t: gs_symbol(stiffness_stencil(p), t), n_theta=1024)
    assert mu == pytest.approx(closed, abs=1e-5)


def test_gs_degradation_trend():
    mus = [smoothing_factor(lambda t: gs_symbol(stiffness_stencil(p), t)) for p in range(4, 9)]
    assert np.all(np.diff(mus) >= 0)


def test_gs_smoothing_factor_degree_eight_above_095():
    mu = smoothing_factor(lambda t: gs_symbol(stiffness_stencil(8), t))
    assert mu >= 0.95


# --- Schwarz ---------------------------------------------------------------------------------


def test_three_point_system_quadratic_entries():
    t = 0.7
    sysm = schwarz_PQ(stiffness_stencil(2), 3, t)
    e = np.exp(1j * t)
    np.testing.assert_allclose(sysm.P[2], [e, -1 / 3, -(1 / 6) / e], atol=1e-14)
    np.testing.assert_allclose(sysm.Q, [0, np.exp(2j * t) / 6, np.exp(2j * t) / 3 + np.exp(3j * t) / 6], atol=1e-14)
    np.testing.assert_allclose(sysm.P, sysm.Pbar * sysm.D_P[None, :], atol=1e-15)
    assert sysm.D_P[-1] == 1


@pytest.mark.parametrize("p", range(2, 9))
def test_three_point_system_general_degree(p):
    a = stiffness_stencil(p).coeffs
    t = -1.1
    E = lambda k: np.exp(1j * k * t)  # noqa: E731
    P = np.array(
        [
            [a[2] * E(1), a[1], sum(a[j] * E(-(j + 1)) for j in range(0, p + 1))],
            [a[1] * E(1), a[0], sum(a[j] * E(-j) for j in range(1, p + 1))],
            [a[0] * E(1), a[1], sum(a[j] * E(-(j - 1)) for j in range(2, p + 1))],
        ]
    )
    Q = -np.array(
        [
            sum(a[j] * E(j - 1) for j in range(3, p + 1)),
            sum(a[j] * E(j) for j in range(2, p + 1)),
            sum(a[j] * E(j + 1) for j in range(1, p + 1)),
        ]
    )
    sysm = schwarz_PQ(stiffness_stencil(p), 3, t)
    np.testing.assert_allclose(sysm.P, P, atol=1e-13)
    np.testing.assert_allclose(sysm.Q, Q, atol=1e-13)


@pytest.mark.parametrize("p,n", [(p, n) for p in range(1, 5) for n in (3, 5)])
def test_circulant_equivalence(p, n):
    S = stiffness_stencil(p)
    N = 256
    for k in range(3, N // 2, 9):
        t = 2 * np.pi * k / N
        assert abs(schwarz_symbol(S, n, t) - periodic_sweep_ratio(S, n, t, N)) <= 1e-8


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.sampled_from([3, 5, 7, 9, 11, 13, 17]), freq)
def test_leading_q_rows_vanish(p, n, t):
    # row r collects a_j for j >= n - r, so rows r < n - p are empty sums
    Q = schwarz_PQ(stiffness_stencil(p), n, t).Q
    assert np.all(Q[: max(0, n - p)] == 0)
    assert Q[-1] != 0


def test_even_block_rejected():
    with pytest.raises(ValueError):
        schwarz_PQ(stiffness_stencil(2), 4, 0.3)
    with pytest.raises(ValueError):
        LfaSmoother("schwarz", 4)


@pytest.mark.parametrize("p,n,expected", [(2, 3, 0.176), (2, 5, 0.119), (6, 7, 0.077)])
def test_schwarz_smoothing_factor(p, n, expected):
    S = stiffness_stencil(p)
    assert smoothing_factor(lambda t: schwarz_symbol(S, n, t)) == pytest.approx(expected, abs=0.002)


def test_zero_symbol_has_zero_smoothing_factor():
    assert smoothing_factor(lambda t: np.zeros_like(t)) == 0.0
    with pytest.raises(ValueError):
        smoothing_factor(lambda t: t, n_theta=32)


# --- frequencies and transfers ------------------------------------------------------------


def test_low_grid_avoids_zero_and_is_symmetric():
    g = low_grid(256)
    assert len(g) == 256 and np.all(np.abs(g) > 0) and np.all(np.abs(g) < np.pi / 2)
    np.testing.assert_allclose(np.sort(-g), np.sort(g), atol=1e-15)


@given(low)
def test_harmonic_partner_is_high_and_involutive(t):
    t1 = harmonic(t)
    assert abs(t1) >= np.pi / 2 - 1e-12
    assert harmonic(t1) == pytest.approx(t, abs=1e-12)


def test_harmonics_4h_example():
    h = harmonics_4h(np.pi / 8)
    np.testing.assert_allclose(h, [np.pi / 8, -7 * np.pi / 8, -3 * np.pi / 8, 5 * np.pi / 8], atol=1e-15)


@given(st.floats(-np.pi / 4 + 1e-3, np.pi / 4).filter(lambda t: abs(t) > 1e-3))
def test_harmonics_4h_distinct_in_range(t):
    h = harmonics_4h(t)
    assert len(np.unique(np.round(h, 12))) == 4
    assert np.all((h > -np.pi) & (h <= np.pi))


@settings(max_examples=30)
@given(freq)
def test_linear_transfer_symbol(t):
    P, R = transfer_symbols(1, t)
    assert P == pytest.approx(1 + np.cos(t), abs=1e-14)
    assert R == pytest.approx(np.conj(P), abs=1e-15)


@pytest.mark.parametrize("p", range(1, 9))
def test_transfer_symbol_values(p):
    P0, _ = transfer_symbols(p, 0.0)
    Ppi, _ = transfer_symbols(p, np.pi)
    assert abs(P0) == pytest.approx(2.0, abs=1e-13)
    assert abs(Ppi) <= 1e-13


def test_quadratic_transfer_modulus():
    t = np.linspace(-np.pi, np.pi, 17)
    P, _ = transfer_symbols(2, t)
    c = [0.25, 0.75, 0.75, 0.25]
    direct = sum(ck * np.exp(-1j * k * t) for k, ck in enumerate(c))
    np.testing.assert_allclose(np.abs(P), np.abs(direct), atol=1e-14)


@pytest.mark.parametrize("p", range(2, 9))
def test_galerkin_coarse_symbol_is_direct(p):
    S = stiffness_stencil(p)
    t = low_grid(64)
    np.testing.assert_allclose(coarse_symbol(S, t), 0.5 * operator_symbol_1d(S, 2 * t), atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(low, st.integers(1, 6))
def test_coarse_grid_correction_is_projector(t, p):
    M, ok = two_grid_symbol(stiffness_stencil(p), LfaSmoother("gs"), t, 0, 0)
    assert ok.all()
    np.testing.assert_allclose(M[0] @ M[0], M[0], atol=1e-10)


# --- convergence factors -----------------------------------------------------------------


def test_gs_two_grid_quadratic():
    assert rho_2g(stiffness_stencil(2), LfaSmoother("gs")) == pytest.approx(0.19, abs=0.01)


def test_gs_three_grid_quintic():
    assert rho_3g(stiffness_stencil(5), LfaSmoother("gs")) == pytest.approx(0.62, abs=0.01)


def test_schwarz_three_grid_example():
    assert rho_3g(stiffness_stencil(7), LfaSmoother("schwarz", 5)) == pytest.approx(0.279, abs=0.01)


@pytest.mark.parametrize("p", range(2, 9))
@pytest.mark.parametrize("sm", [LfaSmoother("gs"), LfaSmoother("schwarz", 3), LfaSmoother("schwarz", 5)])
def test_two_and_three_grid_consistency(p, sm):
    S = stiffness_stencil(p)
    r2 = rho_2g(S, sm)
    assert r2 <= rho_3g(S, sm, gamma=1) + 0.02
    assert rho_3g(S, sm, gamma=2) <= r2 + 0.02


def test_sample_counts_enforced():
    with pytest.raises(ValueError):
        rho_2g(stiffness_stencil(2), LfaSmoother("gs"), n_theta=64)


def test_report_roundtrip(tmp_path):
    rep = analyse(3, LfaSmoother("schwarz", 3))
    d = json.loads(rep.to_json())
    assert d["smoother"] == "schwarz3" and d["mu"] == pytest.approx(0.156, abs=0.002)
    assert d["rho_3g_V"] == pytest.approx(0.114, abs=0.002)
    assert all(d[k] >= 0 for k in ("mu", "rho_2g", "rho_3g_V", "rho_3g_W"))
    path = tmp_path / "curve.csv"
    rep.write_curve_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "theta,abs_symbol" and len(lines) == 513
