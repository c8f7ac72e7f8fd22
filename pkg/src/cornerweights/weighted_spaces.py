"""Weighted Sobolev norms by quadrature on log-polar, strip and ray grids.

A cone function is sampled on a tensor grid in (t, theta) with r = e^t, so
every dyadic annulus receives the same number of nodes.  Cartesian
derivatives are obtained by the chain rule

    d_x = e^{-t} (cos(theta) d_t - sin(theta) d_theta),
    d_z = e^{-t} (sin(theta) d_t + cos(theta) d_theta),

applied repeatedly to finite-difference derivatives in (t, theta).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import RectBivariateSpline

from .cutoffs import smoothstep
from .errors import (
    CompatibilityError,
    DataError,
    PreconditionError,
    ResolutionError,
    TruncationError,
    UsageError,
)

CHARTS = ("cone", "strip", "ray")


# ---------------------------------------------------------------------------
# finite differences


def fd_derivative(values: np.ndarray, h: float, axis: int = 0, order: int = 4) -> np.ndarray:
    """First derivative on a uniform grid, centred inside, one-sided at the ends."""
    v = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    n = v.shape[0]
    if order == 2 or n < 5:
        if n < 3:
            raise ResolutionError("need at least three nodes to differentiate")
        out = np.gradient(v, h, axis=0, edge_order=2)
        return np.moveaxis(out, 0, axis)
    out = np.empty_like(v)
    out[2:-2] = (-v[4:] + 8 * v[3:-1] - 8 * v[1:-3] + v[:-4]) / (12 * h)
    out[0] = (-25 * v[0] + 48 * v[1] - 36 * v[2] + 16 * v[3] - 3 * v[4]) / (12 * h)
    out[1] = (-3 * v[0] - 10 * v[1] + 18 * v[2] - 6 * v[3] + v[4]) / (12 * h)
    out[-1] = (25 * v[-1] - 48 * v[-2] + 36 * v[-3] - 16 * v[-4] + 3 * v[-5]) / (12 * h)
    out[-2] = (3 * v[-1] + 10 * v[-2] - 18 * v[-3] + 6 * v[-4] - v[-5]) / (12 * h)
    return np.moveaxis(out, 0, axis)


def tensor_spline(x, y, values, fill: float | None = None) -> Callable:
    """Tensor-product spline (quintic where the grid allows) of samples on x-by-y.

    Trailing dimensions of ``values`` are interpolated componentwise.  Outside
    the grid the spline is evaluated at the clipped point, or returns
    ``fill`` when one is given.
    """
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    values = np.asarray(values, dtype=float)
    tail = values.shape[2:]
    flat = values.reshape(len(x), len(y), -1)
    kx, ky = min(5, len(x) - 1), min(5, len(y) - 1)
    splines = [RectBivariateSpline(x, y, flat[..., i], kx=kx, ky=ky) for i in range(flat.shape[-1])]

    def fn(X, Y):
        X, Y = np.broadcast_arrays(np.asarray(X, dtype=float), np.asarray(Y, dtype=float))
        Xc, Yc = np.clip(X, x[0], x[-1]), np.clip(Y, y[0], y[-1])
        out = np.stack([s.ev(Xc, Yc) for s in splines], -1).reshape(X.shape + tail)
        if fill is not None:
            outside = (X < x[0]) | (X > x[-1]) | (Y < y[0]) | (Y > y[-1])
            out = np.where(outside.reshape(X.shape + (1,) * len(tail)), fill, out)
        return out
    return fn


def _uniform_step(nodes: np.ndarray) -> float:
    d = np.diff(nodes)
    if np.any(d <= 0):
        raise DataError("grid nodes must be strictly increasing")
    if np.max(np.abs(d - d[0])) > 1e-9 * max(1.0, abs(d[0])):
        raise DataError("finite-difference stencils need a uniform grid")
    return float(d[0])


# ---------------------------------------------------------------------------
# grid functions


@dataclass
class GridFunction:
    """Samples of a field on a tensor grid.

    chart ``cone``: nodes (t, theta), values shape (n_t, n_theta);
    chart ``strip``: nodes (x, z), values shape (n_x, n_z);
    chart ``ray``: nodes (t,), values shape (n_t,), with ``meta['side']``.
    """

    chart: str
    nodes: tuple
    values: np.ndarray
    stencil_order: int = 4
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.chart not in CHARTS:
            raise DataError(f"unknown chart {self.chart!r}")
        self.nodes = tuple(np.asarray(n, dtype=float) for n in self.nodes)
        self.values = np.asarray(self.values, dtype=float)
        if self.stencil_order not in (2, 4):
            raise DataError("stencil order must be 2 or 4")
        expected = tuple(len(n) for n in self.nodes)
        if self.values.shape != expected:
            raise DataError(f"values shape {self.values.shape} does not match nodes {expected}")
        for n in self.nodes:
            if len(n) > 1 and np.any(np.diff(n) <= 0):
                raise DataError("grid nodes must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise DataError("grid function has non-finite values")
        if self.chart == "cone" and self.nodes[0][0] > -4.0:
            raise ResolutionError("cone charts must reach t <= -4")

    @property
    def t(self):
        return self.nodes[0]

    @property
    def theta(self):
        return self.nodes[1]

    def scaled(self, alpha: float) -> "GridFunction":
        return GridFunction(self.chart, self.nodes, alpha * self.values, self.stencil_order, dict(self.meta))

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.chart, self.nodes, values, self.stencil_order, dict(self.meta))

    def mesh(self):
        return np.meshgrid(*self.nodes, indexing="ij")

    def cartesian_points(self) -> np.ndarray:
        T, Q = self.mesh()
        r = np.exp(T)
        return np.stack([r * np.cos(Q), r * np.sin(Q)], axis=-1)


def cone_grid(omega1: float, omega2: float, n_t: int = 257, n_theta: int = 65,
              t_min: float = -8.0, t_max: float = 0.0):
    t = np.linspace(t_min, t_max, n_t)
    q = np.linspace(-omega2, omega1, n_theta)
    return t, q


def sample_cone(fn: Callable, omega1: float, omega2: float, n_t: int = 257, n_theta: int = 65,
                t_min: float = -8.0, t_max: float = 0.0, stencil_order: int = 4) -> GridFunction:
    """Sample fn(r, theta) on the log-polar grid."""
    t, q = cone_grid(omega1, omega2, n_t, n_theta, t_min, t_max)
    T, Q = np.meshgrid(t, q, indexing="ij")
    vals = np.asarray(fn(np.exp(T), Q), dtype=float)
    return GridFunction("cone", (t, q), vals, stencil_order,
                        {"omega1": float(omega1), "omega2": float(omega2)})


def sample_ray(fn: Callable, side: str = "top", n_t: int = 513, t_min: float = -8.0,
               t_max: float = 0.0, stencil_order: int = 4) -> GridFunction:
    """Sample fn(r) on a uniform grid in t = ln r."""
    t = np.linspace(t_min, t_max, n_t)
    return GridFunction("ray", (t,), np.asarray(fn(np.exp(t)), dtype=float), stencil_order, {"side": side})


def sample_strip(fn: Callable, x_lo: float, x_hi: float, n_x: int = 129, n_z: int = 33,
                 stencil_order: int = 4) -> GridFunction:
    x = np.linspace(x_lo, x_hi, n_x)
    z = np.linspace(0.0, 1.0, n_z)
    X, Z = np.meshgrid(x, z, indexing="ij")
    return GridFunction("strip", (x, z), np.asarray(fn(X, Z), dtype=float), stencil_order)


# ---------------------------------------------------------------------------
# reports


@dataclass
class NormReport:
    family: str
    order: float
    beta: float
    carrier: str
    value: float
    quadrature: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.value >= 0 and np.isfinite(self.value)):
            raise DataError(f"norm value {self.value} is not a finite nonnegative number")

    def csv_row(self) -> list:
        q = self.quadrature
        return [self.family, f"{self.order:g}", f"{self.beta:g}", self.carrier,
                f"{self.value:.12e}", q.get("n_t", ""), q.get("n_theta", "")]


NORM_CSV_HEADER = ["space_family", "l", "beta", "carrier", "value", "grid_n_t", "grid_n_theta"]


def norm_reports_csv(reports) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(NORM_CSV_HEADER)
    for rep in reports:
        wr.writerow(rep.csv_row())
    return buf.getvalue()


# ---------------------------------------------------------------------------
# derivatives on charts


def _integrate_2d(integrand, a, b):
    return float(simpson(simpson(integrand, x=b, axis=1), x=a))


def cone_cartesian_derivatives(f: GridFunction, l: int) -> dict:
    """All d_x^a d_z^b f with a + b <= l, keyed by (a, b)."""
    t, q = f.t, f.theta
    if len(t) < l + 2 or len(q) < l + 2 or len(q) < 5:
        raise ResolutionError("grid too coarse for the requested derivative order")
    ht, hq = _uniform_step(t), _uniform_step(q)
    T, Q = np.meshgrid(t, q, indexing="ij")
    einv = np.exp(-T)
    c, s = np.cos(Q), np.sin(Q)
    so = f.stencil_order

    def dx(v):
        return einv * (c * fd_derivative(v, ht, 0, so) - s * fd_derivative(v, hq, 1, so))

    def dz(v):
        return einv * (s * fd_derivative(v, ht, 0, so) + c * fd_derivative(v, hq, 1, so))

    out = {(0, 0): f.values}
    for k in range(1, l + 1):
        for a in range(k, -1, -1):
            b = k - a
            out[(a, b)] = dx(out[(a - 1, b)]) if a > 0 else dz(out[(0, b - 1)])
    for key, v in out.items():
        if not np.all(np.isfinite(v)):
            raise DataError(f"non-finite derivative {key}")
    return out


def vnorm_cone(f: GridFunction, l: int, beta: float) -> NormReport:
    """||f||_{V^l_beta(K)} on the truncated cone t in [t_min, t_max]."""
    if f.chart != "cone":
        raise UsageError("vnorm_cone needs a cone-chart grid function")
    if l < 0:
        raise PreconditionError("order must be nonnegative")
    derivs = cone_cartesian_derivatives(f, l)
    T = np.meshgrid(f.t, f.theta, indexing="ij")[0]
    total = 0.0
    for (a, b), v in derivs.items():
        k = a + b
        # r^{2(beta - l + k)} |d^alpha f|^2 r^2 dt dtheta
        total += _integrate_2d(np.exp(2 * T * (beta - l + k + 1)) * v**2, f.t, f.theta)
    return NormReport("V", l, beta, "cone", float(np.sqrt(max(total, 0.0))),
                      {"rule": "simpson", "n_t": len(f.t), "n_theta": len(f.theta)})


def hnorm_cone(f: GridFunction, l: int) -> float:
    """Unweighted H^l(K) norm of a cone-chart function."""
    derivs = cone_cartesian_derivatives(f, l)
    T = np.meshgrid(f.t, f.theta, indexing="ij")[0]
    total = sum(_integrate_2d(np.exp(2 * T) * v**2, f.t, f.theta) for v in derivs.values())
    return float(np.sqrt(total))


def strip_derivatives(f: GridFunction, l: int) -> dict:
    hx, hz = _uniform_step(f.nodes[0]), _uniform_step(f.nodes[1])
    so = f.stencil_order
    out = {(0, 0): f.values}
    for k in range(1, l + 1):
        for a in range(k, -1, -1):
            b = k - a
            out[(a, b)] = (fd_derivative(out[(a - 1, b)], hx, 0, so) if a > 0
                           else fd_derivative(out[(0, b - 1)], hz, 1, so))
    return out


def hnorm_strip(f: GridFunction, l: int, weight: np.ndarray | None = None) -> float:
    """Plain H^l norm on a tensor grid, optionally of weight * f."""
    g = f if weight is None else f.with_values(weight * f.values)
    derivs = strip_derivatives(g, l)
    total = sum(_integrate_2d(v**2, g.nodes[0], g.nodes[1]) for v in derivs.values())
    return float(np.sqrt(total))


def vnorm_domain(v_c: GridFunction | None, v_R: GridFunction | None, l: int, beta: float,
                 overlap: tuple | None = None) -> NormReport:
    """Cone weighted norm plus strip Sobolev norm.

    ``overlap`` optionally holds (u_from_cone, u_from_strip, tol): the two
    charts' reconstructions of u on a common set of points, which must agree.
    """
    if overlap is not None:
        a, b, tol = overlap
        a, b = np.asarray(a), np.asarray(b)
        scale = max(1.0, float(np.max(np.abs(a))) if a.size else 1.0)
        mism = float(np.max(np.abs(a - b))) if a.size else 0.0
        if mism > tol * scale:
            raise CompatibilityError(f"chart mismatch {mism:.3e} on the overlap exceeds {tol:.1e}")
    vc = vnorm_cone(v_c, l, beta).value if v_c is not None else 0.0
    vr = hnorm_strip(v_R, l) if v_R is not None else 0.0
    q = {"rule": "simpson"}
    if v_c is not None:
        q.update(n_t=len(v_c.t), n_theta=len(v_c.theta))
    return NormReport("V", l, beta, "domain", vc + vr, q)


# ---------------------------------------------------------------------------
# strip norms W^l_{2, beta}


def _check_tail(values, tol, what="weighted signal"):
    scale = float(np.max(np.abs(values))) if values.size else 0.0
    if scale == 0.0:
        return
    ends = max(float(np.max(np.abs(values[0]))), float(np.max(np.abs(values[-1]))))
    if ends > tol * scale:
        raise TruncationError(f"{what} does not decay at the t ends ({ends / scale:.2e})")


def fractional_norm_1d(values: np.ndarray, h: float, s: float) -> float:
    """H^s(R) norm of samples that decay at both ends, via the Fourier multiplier."""
    n = len(values)
    m = 1 << int(np.ceil(np.log2(4 * n)))
    spec = np.fft.rfft(values, m) * h
    xi = 2 * np.pi * np.fft.rfftfreq(m, d=h)
    dxi = xi[1] - xi[0]
    w = np.full(xi.shape, 2.0)
    w[0] = 1.0
    if m % 2 == 0:
        w[-1] = 1.0
    total = np.sum(w * (1 + xi**2) ** s * np.abs(spec) ** 2) * dxi / (2 * np.pi)
    return float(np.sqrt(total))


def wnorm_strip(w: GridFunction, l: int, beta: float, side: str | None = None,
                tail_tol: float = 1e-10) -> NormReport:
    """||e^{beta t} w||_{H^l(C)}; with ``side`` the boundary norm of order l - 1/2 (top) or l - 3/2 (bottom)."""
    if w.chart not in ("cone", "ray"):
        raise UsageError("wnorm_strip needs (t, theta) or ray samples")
    t = w.t
    ht = _uniform_step(t)
    if side is None:
        if w.chart != "cone":
            raise UsageError("interior strip norm needs a two-dimensional grid")
        weighted = np.exp(beta * t)[:, None] * w.values
        _check_tail(weighted, tail_tol)
        g = GridFunction("strip", (t, w.theta), weighted, w.stencil_order)
        val = hnorm_strip(g, l)
        return NormReport("W", l, beta, "strip", val,
                          {"rule": "simpson", "n_t": len(t), "n_theta": len(w.theta)})
    if side not in ("top", "bottom"):
        raise UsageError("side must be top or bottom")
    if w.chart == "cone":
        line = w.values[:, -1] if side == "top" else w.values[:, 0]
    else:
        line = w.values
    weighted = np.exp(beta * t) * line
    _check_tail(weighted, tail_tol)
    s = l - 0.5 if side == "top" else l - 1.5
    if s < 0:
        raise PreconditionError("negative boundary order")
    val = fractional_norm_1d(weighted, ht, s)
    return NormReport("trace-W", s, beta, f"gamma_{'t' if side == 'top' else 'b'}", val,
                      {"rule": "fourier", "n_t": len(t)})


# ---------------------------------------------------------------------------
# trace norms


def _ray_euler_derivatives(f: GridFunction, j_max: int):
    """(r d_r)^j f = d_t^j f on the t grid."""
    h = _uniform_step(f.t)
    out = [f.values]
    for _ in range(j_max):
        out.append(fd_derivative(out[-1], h, 0, f.stencil_order))
    return out


def _double_integral(F: np.ndarray, dF_dr: np.ndarray, r: np.ndarray, w: np.ndarray,
                     power_r: float, power_rho: float = 0.0) -> float:
    """sum_ij w_i w_j r_i^p rho_j^q |F_i - F_j|^2 / |r_i - r_j|^2, diagonal by its limit."""
    n = len(r)
    total = 0.0
    chunk = max(1, 4_000_000 // max(n, 1))
    for start in range(0, n, chunk):
        sl = slice(start, min(start + chunk, n))
        dr = r[sl, None] - r[None, :]
        dF = F[sl, None] - F[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(dr != 0, dF / np.where(dr != 0, dr, 1.0), 0.0)
        idx = np.arange(sl.start, sl.stop)
        q[np.arange(len(idx)), idx] = dF_dr[idx]
        wr = w[sl] * r[sl] ** power_r
        total += float(np.sum(wr[:, None] * (w * r**power_rho)[None, :] * q**2))
    # strips r < r_min or rho < r_min, with F frozen at its first sample there
    r0, F0 = r[0], F[0]
    base = w * (F - F0) ** 2 / r**2
    if power_rho > -1:
        total += r0 ** (power_rho + 1) / (power_rho + 1) * float(np.sum(base * r**power_r))
    if power_r > -1:
        total += r0 ** (power_r + 1) / (power_r + 1) * float(np.sum(base * r**power_rho))
    return total


def _ray_weights(t):
    """Quadrature weights in r for nodes r = e^t (Simpson in t times dr/dt)."""
    n = len(t)
    eye_w = simpson(np.eye(n), x=t, axis=1)
    return eye_w * np.exp(t)


def trace_norm(f: GridFunction, l: int, beta: float, side: str | None = None,
               symmetric: bool = False) -> NormReport:
    """Equivalent norm of V^{l-1/2}_beta on a boundary ray.

    The single integrals use r^{2(beta-l)+1} |(r d_r)^j f|^2 and the double
    integrals r^{2(beta-l)+2} |difference quotient|^2, for j <= l-1 (j = 0
    only when l = 1).  The double integral runs over (0, r_max]^2 where r_max
    is the end of the sampled ray.  With ``symmetric`` the weight is split as
    (r rho)^{beta-l+1}.
    """
    if f.chart != "ray":
        raise UsageError("trace_norm needs a ray grid function")
    if l < 1:
        raise PreconditionError("trace norms need l >= 1")
    side = side or f.meta.get("side", "top")
    t = f.t
    if len(t) < 5:
        raise ResolutionError("ray grid too coarse")
    r = np.exp(t)
    w = _ray_weights(t)
    derivs = _ray_euler_derivatives(f, l)
    total = 0.0
    for j in range(l):
        g = derivs[j]
        total += float(np.sum(w * r ** (2 * (beta - l) + 1) * g**2))
        dg_dr = derivs[j + 1] / r
        if symmetric:
            total += _double_integral(g, dg_dr, r, w, beta - l + 1, beta - l + 1)
        else:
            total += _double_integral(g, dg_dr, r, w, 2 * (beta - l) + 2)
    return NormReport("trace-V", l - 0.5, beta, f"gamma_{'t' if side == 'top' else 'b'}",
                      float(np.sqrt(max(total, 0.0))),
                      {"rule": "simpson-tensor", "n_t": len(t), "band": 0.0,
                       "symmetric": symmetric})


def sobolev_norm_ray(f: GridFunction, s: float) -> float:
    """H^s norm on the half line for integer or half-integer s, in the r variable."""
    two_s = 2 * s
    if two_s < 0 or abs(two_s - round(two_s)) > 1e-12:
        raise UsageError(f"unsupported Sobolev order {s}")
    k = int(np.floor(s))
    frac = round(two_s) % 2 == 1
    r = np.exp(f.t)
    w = _ray_weights(f.t)
    ht = _uniform_step(f.t)
    derivs = [f.values]
    for _ in range(k + (1 if frac else 0)):
        derivs.append(fd_derivative(derivs[-1], ht, 0, f.stencil_order) / r)
    total = sum(float(np.sum(w * d**2)) for d in derivs[: k + 1])
    if frac:
        total += _double_integral(derivs[k], derivs[k + 1], r, w, 0.0)
    return float(np.sqrt(total))


# ---------------------------------------------------------------------------
# lemmas as checkable inequalities


def _support_radius(f: GridFunction, tol: float = 1e-12) -> float:
    vals = np.abs(f.values)
    if vals.max() == 0:
        return 0.0
    mask = vals > tol * vals.max()
    rows = np.any(mask.reshape(len(f.t), -1), axis=1)
    return float(np.exp(f.t[np.nonzero(rows)[0][-1]]))


def embed_check(f: GridFunction, l1: int, beta1: float, l2: int, beta2: float, delta: float,
                tol: float = 1e-9):
    """Both sides of ||f||_{V^{l1}_{beta1}} <= delta^{(l2-beta2)-(l1-beta1)} ||f||_{V^{l2}_{beta2}}."""
    if not (l2 >= l1 >= 0):
        raise PreconditionError("embedding needs l2 >= l1 >= 0")
    if l2 - beta2 < l1 - beta1:
        raise PreconditionError("embedding needs l2 - beta2 >= l1 - beta1")
    h = np.exp(f.t[1] - f.t[0])
    if _support_radius(f) > delta * h * (1 + 1e-12):
        raise PreconditionError("function is not supported in r <= delta")
    lhs = vnorm_cone(f, l1, beta1).value
    rhs = delta ** ((l2 - beta2) - (l1 - beta1)) * vnorm_cone(f, l2, beta2).value
    return lhs, rhs, bool(lhs <= rhs * (1 + tol))


CONVERSIONS = ("H2->V2_2", "L2->V0_2", "H3/2->V3/2_2", "V3/2_0->H3/2", "V1/2_0->H1/2")


@dataclass
class ConversionReport:
    direction: str
    lhs: float
    rhs: float
    fitted_c: float
    bound: float
    passed: bool


def sobolev_weighted_convert(f: GridFunction, direction: str, delta: float,
                             bound: float = 10.0) -> ConversionReport:
    """Evaluate both sides of a weighted/unweighted norm comparison.

    lhs <= C rhs is asserted with C = lhs / rhs recorded; ``passed`` when C
    does not exceed ``bound``.
    """
    if direction not in CONVERSIONS:
        raise UsageError(f"unsupported conversion {direction!r}; choose from {CONVERSIONS}")
    if direction == "H2->V2_2":
        lhs, rhs = vnorm_cone(f, 2, 2.0).value, hnorm_cone(f, 2)
    elif direction == "L2->V0_2":
        lhs, rhs = vnorm_cone(f, 0, 2.0).value, hnorm_cone(f, 0)
    elif direction == "H3/2->V3/2_2":
        lhs, rhs = trace_norm(f, 2, 2.0).value, sobolev_norm_ray(f, 1.5)
    elif direction == "V3/2_0->H3/2":
        lhs, rhs = sobolev_norm_ray(f, 1.5), trace_norm(f, 2, 0.0).value
    else:
        lhs, rhs = sobolev_norm_ray(f, 0.5), trace_norm(f, 1, 0.0).value
    if rhs == 0.0:
        c = 0.0 if lhs == 0.0 else np.inf
    else:
        c = lhs / rhs
    return ConversionReport(direction, lhs, rhs, float(c), bound, bool(c <= bound))


def angular_blend(theta, omega1: float, omega2: float, order: int = 0):
    """psi_1: 0 at theta = -omega2, 1 at theta = omega1, flat at both ends."""
    om = omega1 + omega2
    return smoothstep((np.asarray(theta) + omega2) / om, order) / om**order


@dataclass
class ExtensionResult:
    w: GridFunction
    w_norm: float
    trace_sum: float
    fitted_c: float


def extend_trace(f: GridFunction, g: GridFunction, l: int, beta: float, omega1: float,
                 omega2: float, n_theta: int = 65) -> ExtensionResult:
    """Angular blend w = f psi_1 + g psi_2 with psi_1 + psi_2 = 1."""
    if l < 1:
        raise PreconditionError("extension needs l >= 1")
    if f.chart != "ray" or g.chart != "ray" or not np.array_equal(f.t, g.t):
        raise DataError("traces must be ray functions on a common t grid")
    nf = trace_norm(f, l, beta).value
    ng = trace_norm(g, l, beta).value
    if not (np.isfinite(nf) and np.isfinite(ng)):
        raise DataError("trace norms are not finite")
    q = np.linspace(-omega2, omega1, n_theta)
    psi1 = angular_blend(q, omega1, omega2)
    vals = f.values[:, None] * psi1[None, :] + g.values[:, None] * (1.0 - psi1[None, :])
    w = GridFunction("cone", (f.t, q), vals, f.stencil_order,
                     {"omega1": float(omega1), "omega2": float(omega2)})
    wn = vnorm_cone(w, l, beta).value
    ts = nf + ng
    c = wn / ts if ts > 0 else 0.0
    return ExtensionResult(w, wn, ts, float(c))
