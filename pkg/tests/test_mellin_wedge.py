import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cornerweights.errors import NearSpectrumError
from cornerweights.mellin_wedge import (
    SpectralField,
    contour_nodes,
    eigensystem,
    fit_resolvent_constant,
    laplace_forward,
    laplace_inverse,
    parseval_sides,
    resolvent_norm_check,
    solve_pencil,
)

MIXED = ("dirichlet", "neumann")
T = np.linspace(-20, 20, 4001)


def test_gaussian_transform_at_zero():
    val = laplace_forward(np.exp(-T**2), T, [0.0])[0]
    assert val.real == pytest.approx(np.sqrt(np.pi), abs=1e-8)


@settings(max_examples=20, deadline=None)
@given(st.floats(-2.0, 2.0), st.floats(-6.0, 6.0))
def test_gaussian_transform_closed_form(re, im):
    lam = complex(re, im)
    val = laplace_forward(np.exp(-T**2), T, [lam])[0]
    assert abs(val - np.sqrt(np.pi) * np.exp(lam**2 / 4)) < 1e-8 * max(1.0, abs(np.exp(lam**2 / 4)))


def test_transform_of_derivative():
    lams = -0.5 + 1j * np.linspace(-5, 5, 11)
    w = np.exp(-T**2)
    lhs = laplace_forward(-2 * T * w, T, lams)
    assert np.max(np.abs(lhs - lams * laplace_forward(w, T, lams))) < 1e-6


def test_zero_signal():
    assert np.all(laplace_forward(np.zeros_like(T), T, [0.3 + 1j]) == 0)


def test_inverse_recovers_gaussian():
    beta = 0.5
    tau = contour_nodes(beta, 40.0, 4001)
    fld = SpectralField(beta, tau, laplace_forward(np.exp(-T**2), T, -beta + 1j * tau))
    tt = np.linspace(-4, 4, 81)
    assert np.max(np.abs(laplace_inverse(fld, tt).real - np.exp(-tt**2))) < 1e-6


def test_parseval():
    lhs, rhs = parseval_sides(np.exp(-T**2), T, 0.5)
    assert abs(lhs - rhs) / lhs < 1e-6


def test_mixed_eigenvalues():
    es = eigensystem(MIXED, np.pi / 3)
    lams = es.eigenvalues
    for v in (-4.5, -1.5, 1.5, 4.5):
        assert np.min(np.abs(lams - v)) < 1e-12
    assert np.min(np.abs(lams)) == pytest.approx(1.5)
    assert es.exclusion_verdict()[0]


def test_dirichlet_eigenvalues_skip_zero():
    es = eigensystem(("dirichlet", "dirichlet"), np.pi / 2)
    lams = es.eigenvalues
    assert 0.0 not in lams
    assert not np.any((lams >= -1) & (lams < 0))
    assert np.min(np.abs(lams - 2.0)) < 1e-12


def test_neumann_eigenvalues():
    es = eigensystem(("neumann", "neumann"), 3 * np.pi / 4)
    nums = np.array([e.lam_numeric for e in es.entries])
    assert np.min(np.abs(nums - 4.0 / 3.0)) < 1e-12
    zero = es.nearest(0.0)
    assert zero.lam == 0.0
    assert np.allclose(zero.eigenfunction(np.linspace(-1, 1, 5)), 1.0)


def test_pencil_boundary_datum():
    sol = solve_pencil(1.0, (None, 1.0, 0.0), MIXED, np.pi / 6, np.pi / 6)
    q = np.linspace(-np.pi / 6, np.pi / 6, 9)
    assert np.allclose(sol(q), 2 * np.cos(q + np.pi / 6), atol=1e-12)
    assert sol(np.pi / 6) == pytest.approx(1.0)


def test_pencil_zero_data():
    sol = solve_pencil(0.3 + 2j, (None, 0.0, 0.0), MIXED, np.pi / 6, np.pi / 6)
    assert np.all(sol(np.linspace(-0.5, 0.5, 5)) == 0)


def test_pencil_blow_up_near_eigenvalue():
    norms = []
    ks = np.arange(2, 7)
    for k in ks:
        sol = solve_pencil(1.5 + 10.0**-k, (None, 1.0, 0.0), MIXED, np.pi / 6, np.pi / 6)
        norms.append(abs(sol(0.0)))
    slope = np.polyfit(ks, np.log10(norms), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.05)
    with pytest.raises(NearSpectrumError):
        solve_pencil(1.5 + 1e-10, (None, 1.0, 0.0), MIXED, np.pi / 6, np.pi / 6)


def test_resolvent_estimate_sweep():
    lams = -0.5 + 1j * np.linspace(-50, 50, 41)
    rhs = (lambda q: np.cos(q), 1.0, 0.5)
    c2 = fit_resolvent_constant(lams, rhs, MIXED, np.pi / 6, np.pi / 6, l=2)
    c3 = fit_resolvent_constant(lams, rhs, MIXED, np.pi / 6, np.pi / 6, l=3)
    assert c2 < 100
    assert c3 < 10 * c2
    assert resolvent_norm_check(-0.5, (None, 0.0, 0.0), MIXED, np.pi / 6, np.pi / 6) == (0.0, 0.0, True)
