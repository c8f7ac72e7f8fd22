import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cornerweights.errors import DomainError, GeometryError
from cornerweights.geometry import (
    SurfaceProfile,
    WedgeSpec,
    build_domain,
    build_regularized_map,
    linear_wedge_profile,
    map_Tc,
    map_Tc_inv,
    map_TR,
    map_TR_inv,
    map_TS,
    map_TS_inv,
    p_s_matrix,
    p_c_matrix,

)

DIAG = SurfaceProfile("polynomial", (0.0, 1.0), 1.0)


def test_angles_of_diagonal_corner():
    info = build_domain(DIAG)
    assert info.omega1 == pytest.approx(np.pi / 4)
    assert info.omega2 == pytest.approx(np.pi / 4)
    assert info.omega == pytest.approx(np.pi / 2)


def test_symmetric_wedge_angle():
    p = linear_wedge_profile(np.pi / 6, np.pi / 6)
    assert build_domain(p).omega == pytest.approx(np.pi / 3)


def test_curved_top_uses_slope_at_corner():
    p = SurfaceProfile("polynomial", (0.0, 1.0, -1.0), 1.0, delta=0.1)
    h = 1e-6
    fd = (p.eta(h) - p.eta(-h)) / (2 * h)
    assert fd == pytest.approx(p.eta(0.0, 1), abs=1e-9)
    assert p.omega1 == pytest.approx(np.pi / 4)


def test_straightening_map_examples():
    assert np.allclose(map_TS(np.array([0.0, 0.0]), DIAG), 0.0)
    img = map_TS(np.array([1.0, 1.0]), DIAG)
    assert np.allclose(img, [0.5, 0.5])
    assert img[1] == pytest.approx(DIAG.eta(img[0]))


def test_corner_matrix():
    assert DIAG.d0 == pytest.approx(0.5)
    assert np.allclose(DIAG.P0, [[1.5, 1.0], [0.5, 1.0]])
    assert np.linalg.det(DIAG.P0) == pytest.approx(1.0)
    assert np.allclose(p_s_matrix(np.zeros((1, 2)), DIAG)[0], DIAG.P0)


@given(st.floats(0.1, 5.0), st.floats(0.1, 3.0))
def test_corner_matrix_unimodular(gamma, slope):
    p = SurfaceProfile("polynomial", (0.0, slope), gamma)
    assert np.linalg.det(p.P0) == pytest.approx(1.0, rel=1e-12)


def test_cone_coefficient_identity_at_corner():
    p = SurfaceProfile("polynomial", (0.0, 1.0, -0.2), 1.0, delta=0.1)
    assert np.allclose(p_c_matrix(np.array([[1e-12, 0.0]]), p)[0], np.eye(2), atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_roundtrips(seed):
    p = SurfaceProfile("polynomial", (0.0, 0.8, -0.3), 1.3, delta=0.2)
    rng = np.random.default_rng(seed)
    r = rng.uniform(0, 0.1, 40)
    q = rng.uniform(0, np.pi / 4, 40)
    pts = np.stack([r * np.cos(q), r * np.sin(q)], -1)
    assert np.max(np.abs(map_TS_inv(map_TS(pts, p), p) - pts)) < 1e-12
    assert np.max(np.abs(map_Tc_inv(map_Tc(pts, p), p) - pts)) < 1e-12
    strip = np.stack([rng.uniform(0.1, 3, 40), rng.uniform(0, 1, 40)], -1)
    assert np.max(np.abs(map_TR_inv(map_TR(strip, p), p) - strip)) < 1e-12


def test_strip_map_boundaries():
    p = SurfaceProfile("polynomial", (0.0, 0.8, -0.1), 1.0)
    x = np.linspace(0.5, 2, 7)
    top = map_TR(np.stack([x, np.ones_like(x)], -1), p)
    bot = map_TR(np.stack([x, np.zeros_like(x)], -1), p)
    assert np.allclose(top[:, 1], p.eta(x))
    assert np.allclose(bot[:, 1], -x)


def test_regularized_map_without_perturbation_has_unit_determinant():
    bundle, _, _ = build_regularized_map(DIAG, epsilon=0.0)
    rng = np.random.default_rng(3)
    pts = rng.uniform(0.01, 0.05, (20, 2))
    assert np.allclose(bundle.s_field.det(pts), 1.0, atol=1e-12)


def test_invalid_geometry_raises():
    with pytest.raises(GeometryError):
        SurfaceProfile("polynomial", (0.0, 1.0), -1.0)
    with pytest.raises(GeometryError):
        build_domain(SurfaceProfile("polynomial", (0.1, 1.0), 1.0))
    with pytest.raises(DomainError):
        build_domain(DIAG, "MBVP")
    with pytest.raises(DomainError):
        WedgeSpec(np.pi / 2, 0.3)
