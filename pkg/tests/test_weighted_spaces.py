import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from cornerweights.cutoffs import plateau
from cornerweights.errors import PreconditionError, UsageError
from cornerweights.weighted_spaces import (
    GridFunction,
    embed_check,
    sample_cone,
    sample_ray,
    sobolev_norm_ray,
    trace_norm,
    vnorm_cone,
    vnorm_domain,
    wnorm_strip,
)

OM = np.pi / 6


def _gauss_cone(c=-3.0, w=0.5):
    return sample_cone(lambda r, q: np.exp(-((np.log(r) - c) / w) ** 2) * np.cos(q),
                       OM, OM, n_t=257, n_theta=33, t_min=-8, t_max=0)


def test_zero_function_has_zero_norms():
    z = sample_cone(lambda r, q: 0 * r, OM, OM, n_t=65, n_theta=17)
    assert vnorm_cone(z, 2, 1.0).value == 0.0
    assert wnorm_strip(z, 2, 1.0).value == 0.0
    ray = sample_ray(lambda r: 0 * r, n_t=65)
    assert trace_norm(ray, 2, 1.0).value == 0.0


def test_truncated_linear_function():
    f = sample_cone(lambda r, q: r + 0 * q, OM, OM, n_t=1025, n_theta=33, t_min=-12, t_max=0)
    assert vnorm_cone(f, 0, 0.0).value ** 2 == pytest.approx(np.pi / 12, abs=1e-6)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.1, 10.0), st.integers(0, 2), st.floats(0.0, 2.0))
def test_homogeneity(alpha, l, beta):
    f = _gauss_cone()
    assert vnorm_cone(f.scaled(alpha), l, beta).value == pytest.approx(
        alpha * vnorm_cone(f, l, beta).value, rel=1e-12)


def test_domain_norm_adds_cone_part():
    f = _gauss_cone()
    assert vnorm_domain(f, None, 1, 1.0).value == pytest.approx(vnorm_cone(f, 1, 1.0).value)


def test_strip_norm_against_direct_quadrature():
    t = np.linspace(-12, 12, 2401)
    q = np.linspace(-OM, OM, 17)
    w = GridFunction("cone", (t, q), (np.exp(t - t**2))[:, None] * np.ones(len(q)))
    g = lambda s: np.exp(2 * s - s**2)
    dg = lambda s: (2 - 2 * s) * g(s)
    exact = np.sqrt(2 * OM * quad(lambda s: g(s) ** 2 + dg(s) ** 2, -12, 12, epsabs=1e-14)[0])
    assert wnorm_strip(w, 1, 1.0).value == pytest.approx(exact, rel=1e-8)


def test_log_polar_equivalence_is_uniform():
    rng = np.random.default_rng(1)
    ratios = []
    for _ in range(6):
        f = _gauss_cone(rng.uniform(-5, -3), rng.uniform(0.3, 0.6))
        ratios.append(vnorm_cone(f, 1, 1.0).value / wnorm_strip(f, 1, 1.0).value)
    assert max(ratios) / min(ratios) < 10


def test_trace_norm_against_brute_force():
    f = lambda r: r * plateau(r, 0.5, 1.0)
    val = trace_norm(sample_ray(f, n_t=1025, t_min=-14, t_max=0.0), 1, 1.0).value

    def rule(n, panels):
        x, w = np.polynomial.legendre.leggauss(n)
        e = np.linspace(0, 1, panels + 1)
        return (np.concatenate([(a + b) / 2 + (b - a) / 2 * x for a, b in zip(e[:-1], e[1:])]),
                np.concatenate([(b - a) / 2 * w for a, b in zip(e[:-1], e[1:])]))

    r, wr = rule(20, 40)
    p, wp = rule(21, 40)
    quot = (f(r)[:, None] - f(p)[None, :]) / (r[:, None] - p[None, :])
    oracle = np.sqrt(np.sum(wr * r * f(r) ** 2) + np.sum(wr[:, None] * wp * r[:, None] ** 2 * quot**2))
    assert val == pytest.approx(oracle, rel=1e-6)


def test_embedding_for_bumps():
    rng = np.random.default_rng(7)
    for _ in range(5):
        c, w = rng.uniform(-5, -3), rng.uniform(0.2, 0.4)
        f = sample_cone(lambda r, q: plateau(np.abs(np.log(r) - c), 0.0, w) * np.cos(q),
                        OM, OM, n_t=257, n_theta=17, t_min=-8, t_max=0)
        lhs, rhs, ok = embed_check(f, 0, 1.1, 0, 1.0, 1.0)
        assert ok and lhs <= rhs


def test_sobolev_order_checks():
    ray = sample_ray(lambda r: np.exp(-((r - 0.5) / 0.1) ** 2), n_t=257, t_min=-8, t_max=0.5)
    assert sobolev_norm_ray(ray, 1.5) > sobolev_norm_ray(ray, 1.0) > sobolev_norm_ray(ray, 0.0) > 0
    with pytest.raises(UsageError):
        sobolev_norm_ray(ray, 0.3)
    with pytest.raises(PreconditionError):
        trace_norm(ray, 0, 0.0)
    with pytest.raises(UsageError):
        vnorm_cone(ray, 1, 0.0)
