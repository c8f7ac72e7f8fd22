import numpy as np
import pytest

from cornerweights.bvp_solver import AnalyticField, ProblemData, solve_full
from cornerweights.errors import PreconditionError
from cornerweights.estimates import (
    NormGrid,
    data_norm,
    field_norm,
    ray_samples,
    top_abscissa,
    trace_order_norm,
)
from cornerweights.experiments import smooth_instance
from cornerweights.geometry import SurfaceProfile, linear_wedge_profile

CURVED = SurfaceProfile("polynomial", (0.0, 0.5, -0.3), 0.6, delta=0.2)
WEDGE = linear_wedge_profile(np.pi / 6, np.pi / 6)
ZERO = AnalyticField(lambda x, z: 0.0, lambda x, z: (0.0, 0.0))


def test_top_abscissa_inverts_arclength_radius():
    r = np.geomspace(1e-6, 0.5, 50)
    x = top_abscissa(CURVED, r)
    assert np.max(np.abs(np.hypot(x, CURVED.eta(x)) - r) / r) < 1e-13


def test_ray_samples_follow_the_boundary():
    t = np.linspace(-6, -1, 33)
    g = ray_samples(lambda x: x, WEDGE, "bottom", t)
    assert np.allclose(g.values, np.exp(t) * np.cos(np.pi / 6))


def test_zero_field_and_data():
    grid = NormGrid(n_t=97, n_x=101, n_ray=97)
    assert field_norm(ZERO, WEDGE, 2, 1.0, grid=grid)["total"] == 0.0
    assert data_norm("MBVP", WEDGE, ProblemData(), 2, 1.0, grid=grid)["total"] == 0.0


def test_field_norm_homogeneity():
    grid = NormGrid(n_t=129, n_x=161, n_ray=97)
    u = AnalyticField(lambda x, z: np.exp(-(x - 0.5) ** 2) * (1 + z), lambda x, z: (0.0, 0.0))
    u3 = AnalyticField(lambda x, z: 3 * np.exp(-(x - 0.5) ** 2) * (1 + z), lambda x, z: (0.0, 0.0))
    a = field_norm(u, WEDGE, 2, 1.0, grid=grid)
    b = field_norm(u3, WEDGE, 2, 1.0, grid=grid)
    assert b["total"] == pytest.approx(3 * a["total"], rel=1e-12)
    assert a["cone"] > 0 and a["strip"] > 0


def test_trace_order_must_be_half_integer():
    with pytest.raises(PreconditionError):
        trace_order_norm(lambda x: x, WEDGE, "top", 1.0, 1.0)


def test_solution_norm_is_stable_under_refinement():
    inst = smooth_instance("MBVP", WEDGE, 11, 0)
    vals = []
    for n in (257, 513):
        sol = solve_full("MBVP", WEDGE, inst.data, decompose=False, n_xi=n, n_s=33)
        vals.append(field_norm(sol.u, WEDGE, 2, 1.0)["total"])
    assert np.isfinite(vals).all()
    assert abs(vals[1] / vals[0] - 1) < 0.02
