import numpy as np
import pytest

from cornerweights.corner_solver import (
    WedgeProblem,
    fit_singular_exponents,
    shift_contour,
    singular_function,
    solve_wedge,
)
from cornerweights.errors import WeightSelectionError
from cornerweights.geometry import WedgeSpec
from cornerweights.mellin_wedge import eigensystem

SPEC = WedgeSpec(np.pi / 6, np.pi / 6)
EIG = eigensystem(SPEC.bc_pair, SPEC.omega)


def _h(r, q):
    return np.exp(-((np.log(r) + 1.2) / 0.35) ** 2) * (1 + 0.4 * np.cos(3 * q))


def _f(r):
    return 0.6 * np.exp(-((np.log(r) + 0.8) / 0.3) ** 2)


def test_zero_data_gives_zero():
    sol = solve_wedge(WedgeProblem(SPEC), 0.5, n_t=64, n_theta=16)
    assert np.all(sol.values == 0)


def test_linearity():
    kw = dict(n_t=96, n_theta=24)
    a = solve_wedge(WedgeProblem(SPEC, h=_h, support=np.exp(1.5)), 0.5, **kw).values
    b = solve_wedge(WedgeProblem(SPEC, f=_f, support=np.exp(1.5)), 0.5, **kw).values
    ab = solve_wedge(WedgeProblem(SPEC, h=_h, f=_f, support=np.exp(1.5)), 0.5, **kw).values
    assert np.max(np.abs(ab - a - b)) < 1e-10 * np.max(np.abs(ab))


def test_contour_on_eigenvalue_line_rejected():
    with pytest.raises(WeightSelectionError):
        solve_wedge(WedgeProblem(SPEC, f=_f), -1.5)


def test_zero_data_shift():
    res = shift_contour(WedgeProblem(SPEC), 1.0, 0.1)
    assert res.sup_difference == 0.0 and not res.crossed


def test_exact_singular_term_is_recovered():
    v = singular_function(EIG.nearest(1.5), None, np.pi / 6, np.pi / 6, t_min=-10)
    dec = fit_singular_exponents(v, EIG, delta=1.0)
    assert len(dec.terms) == 1
    assert dec.terms[0].lam_hat == pytest.approx(1.5, abs=0.01)
    assert dec.terms[0].c_hat == pytest.approx(1.0, abs=0.02)


def test_singular_plus_smooth_part():
    s0 = singular_function(EIG.nearest(1.5), None, np.pi / 6, np.pi / 6, t_min=-10)
    T, Q = np.meshgrid(s0.t, s0.theta, indexing="ij")
    smooth = np.exp(2 * T) * (1 + np.cos(Q))
    dec = fit_singular_exponents(s0.with_values(2 * s0.values + smooth), EIG, delta=1.0)
    assert dec.terms[0].lam_hat == pytest.approx(1.5, abs=0.01)
    assert dec.terms[0].c_hat == pytest.approx(2.0, rel=0.05)


def test_zero_field_has_no_terms():
    z = singular_function(EIG.nearest(1.5), None, np.pi / 6, np.pi / 6, t_min=-10)
    dec = fit_singular_exponents(z.with_values(0 * z.values), EIG, delta=1.0)
    assert dec.terms == [] and dec.regular_remainder_norm.value == 0.0


def test_singular_function_is_harmonic_and_satisfies_edges():
    v = singular_function(EIG.nearest(1.5), None, np.pi / 6, np.pi / 6, n_t=401, n_theta=201,
                          t_min=-4, t_max=0)
    t, q, u = v.t, v.theta, v.values
    ht, hq = t[1] - t[0], q[1] - q[0]
    lap = (u[2:, 1:-1] - 2 * u[1:-1, 1:-1] + u[:-2, 1:-1]) / ht**2 \
        + (u[1:-1, 2:] - 2 * u[1:-1, 1:-1] + u[1:-1, :-2]) / hq**2
    assert np.max(np.abs(lap)) < 1e-3
    assert np.max(np.abs(u[:, -1])) < 1e-12
    assert np.max(np.abs(-3 * u[:, 0] + 4 * u[:, 1] - u[:, 2])) / (2 * hq) < 1e-3
