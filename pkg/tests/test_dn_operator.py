import numpy as np
import pytest

from cornerweights.cutoffs import smooth_plateau, smoothstep
from cornerweights.dn_operator import (
    dn_apply,
    dn_estimate_report,
    harmonic_extend,
    product_norm_check,
    wedge_dn_closed_form,
)
from cornerweights.errors import PreconditionError
from cornerweights.estimates import NormGrid
from cornerweights.geometry import linear_wedge_profile
from cornerweights.weighted_spaces import sample_ray, sobolev_norm_ray, trace_norm

WEDGE = linear_wedge_profile(np.pi / 6, np.pi / 6)
KW = dict(n_xi=321, n_s=33)


def _exact(x, z):
    return np.hypot(x, z) * np.cos(np.arctan2(z, x) + np.pi / 6)


def test_constant_extends_to_constant():
    ext = harmonic_extend(lambda r: 3.0 + 0 * np.asarray(r), WEDGE, **KW)
    assert np.max(np.abs(ext.u.values - 3.0)) < 1e-10
    inst = dn_apply(lambda r: 3.0 + 0 * np.asarray(r), WEDGE, extension=ext)
    assert np.max(np.abs(inst.Nf.values)) < 1e-8


def test_wedge_extension_matches_harmonic():
    ext = harmonic_extend(lambda r: 0.5 * np.asarray(r), WEDGE, far_field=_exact, **KW)
    X, Z = ext.u.nodes_physical()
    assert np.max(np.abs(ext.u.values - _exact(X, Z))) < 1e-5


def test_wedge_operator_value():
    inst = dn_apply(lambda r: 0.5 * np.asarray(r), WEDGE, far_field=_exact, **KW)
    expected = wedge_dn_closed_form(1.0, np.pi / 3, np.exp(inst.Nf.t))
    assert np.allclose(expected, -np.sin(np.pi / 3))
    assert np.max(np.abs(inst.Nf.values - expected)) < 1e-4


def test_linearity():
    f = lambda r: np.asarray(r) ** 2 * smooth_plateau(np.asarray(r), 0.1, 0.2)
    a = dn_apply(f, WEDGE, **KW).Nf.values
    b = dn_apply(lambda r: 2.5 * f(r), WEDGE, **KW).Nf.values
    assert np.max(np.abs(b - 2.5 * a)) < 1e-10 * np.max(np.abs(b))


def _ray(fn, r_max=0.5):
    return sample_ray(fn, n_t=257, t_min=-8, t_max=np.log(r_max))


def test_product_estimate_with_unit_multiplier():
    f = _ray(lambda r: r**1.6 * smoothstep((0.4 - r) / 0.2), 1.0)
    one = _ray(lambda r: 1.0 + 0 * r, 1.0)
    lhs, bound, C, ok = product_norm_check(f, one, 2, 2.0)
    assert ok and lhs == pytest.approx(trace_norm(f, 3, 2.0).value, rel=1e-14)
    assert C == pytest.approx(1.0 / sobolev_norm_ray(one, 2.5), rel=1e-12) and C >= 1.0
    assert product_norm_check(f.with_values(0 * f.values), _ray(lambda r: 1.0 + 0 * r), 2, 2.0)[0] == 0.0


def test_product_estimate_with_smooth_multiplier():
    f = _ray(lambda r: r**1.6 * smoothstep((0.4 - r) / 0.2))
    g = _ray(lambda r: smoothstep(r / 0.5))
    lhs, bound, C, ok = product_norm_check(f, g, 2, 2.0)
    assert ok and np.isfinite(C) and C > 0
    with pytest.raises(PreconditionError):
        product_norm_check(f, g, 1, 2.0)


GRID = NormGrid(n_ray=193)


def test_zero_family_and_homogeneity():
    rep = dn_estimate_report([lambda r: 0 * np.asarray(r)], WEDGE, grid=GRID, **KW)
    assert rep.max_ratio == 0.0
    base = lambda r: np.asarray(r) ** 2 * smooth_plateau(np.asarray(r), 0.06, 0.12)
    fam = [lambda r, a=a: a * base(r) for a in (1.0, 2.0, 4.0)]
    ratios = [row.ratio for row in dn_estimate_report(fam, WEDGE, grid=GRID, **KW).rows]
    assert max(ratios) - min(ratios) < 1e-8 * max(ratios)


def test_estimate_range_is_checked():
    with pytest.raises(PreconditionError):
        dn_estimate_report([], WEDGE, k=2, beta=1.0)
