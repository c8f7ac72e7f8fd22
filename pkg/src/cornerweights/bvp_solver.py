"""Full-domain mixed, Dirichlet and Neumann problems on a corner domain.

Pipeline of ``solve_full``:

1. a monolithic bilinear-element solve of the whole truncated domain on the
   graded chart (ln x, s), with z = l(x) + s (eta(x) - l(x));
2. localization: chi u is pulled back to the cone patch, (1 - chi) u to the
   flat strip, with the commutator terms evaluated from the global solution;
3. the cone patch is solved directly on its log-polar chart (optionally also
   by the perturbation iteration around the model wedge), the strip by
   bilinear elements;
4. both pieces are pushed forward and compared with the global solution on
   the overlap annulus.

Data conventions: h(x, z) is the interior source of Laplace u = h; f and g
are functions of the abscissa x along the top and bottom boundaries.  A
Neumann datum is the outward normal derivative.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline, RectBivariateSpline

from .corner_solver import WedgeProblem, solve_wedge
from .cutoffs import plateau, smooth_plateau, smoothstep
from .errors import (
    AssemblyError,
    CompatibilityError,
    DomainError,
    PreconditionError,
    SolverError,
    UsageError,
)
from .fem import SideCondition, solve_q1, solve_q1_extrapolated
from .geometry import (
    RegularizedMap,
    SurfaceProfile,
    WedgeSpec,
    build_domain,
    build_regularized_map,
    check_angle,
    jacobian_Tc,
    map_Tc,
    map_Tc_inv,
    map_TR,
    map_TR_inv,
)
from .mellin_wedge import normalize_bc_pair
from .weighted_spaces import (GridFunction, fd_derivative, fractional_norm_1d, tensor_spline, vnorm_cone,
                              wnorm_strip)

KINDS = {"MBVP": ("dirichlet", "neumann"), "DVP": ("dirichlet", "dirichlet"),
         "NVP": ("neumann", "neumann")}


def problem_bcs(kind: str):
    try:
        return KINDS[kind.upper()]
    except KeyError:
        raise PreconditionError(f"unknown problem kind {kind!r}") from None


# ---------------------------------------------------------------------------
# cutoffs and partitions


@dataclass(frozen=True)
class CutoffSpec:
    """Radial cutoff chi_c (1 for r <= delta/2, 0 for r >= delta) and its
    companion chi_bar (1 for r <= delta, 0 for r >= 3 delta/2).

    ``ramp`` is 'smooth' (exp(-1/u) blend, C-infinity) or 'quintic' (C^2).
    Derivatives are available up to order 2 for 'smooth'.
    """

    delta: float
    ramp: str = "smooth"

    def __post_init__(self):
        if not self.delta > 0:
            raise PreconditionError("cutoff radius must be positive")
        if self.ramp not in ("smooth", "quintic"):
            raise PreconditionError(f"unknown cutoff ramp {self.ramp!r}")

    def _plateau(self, r, inner, outer, order):
        fn = smooth_plateau if self.ramp == "smooth" else plateau
        return fn(r, inner, outer, order)

    def chi(self, r, order: int = 0):
        return self._plateau(r, 0.5 * self.delta, self.delta, order)

    def chi_bar(self, r, order: int = 0):
        return self._plateau(r, self.delta, 1.5 * self.delta, order)

    @property
    def derivative_bounds(self) -> dict:
        r = np.linspace(0.5 * self.delta, self.delta, 20001)
        return {k: float(np.max(np.abs(self.chi(r, k)))) for k in (1, 2)}

    def gradient(self, x, z):
        r = np.hypot(x, z)
        d = self.chi(r, 1)
        rs = np.where(r > 0, r, 1.0)
        return d * x / rs, d * z / rs

    def laplacian(self, x, z):
        r = np.hypot(x, z)
        rs = np.where(r > 0, r, 1.0)
        return self.chi(r, 2) + np.where(r > 0, self.chi(r, 1) / rs, 0.0)


@dataclass(frozen=True)
class PartitionSpec:
    """zeta_k(t) = ramp(t - k + 1) on [k-1, k], 1 - ramp(t - k) on [k, k+1]."""

    k_min: int
    k_max: int

    def zeta(self, k: int, t, order: int = 0):
        t = np.asarray(t, dtype=float)
        u = t - k
        left = (u >= -1) & (u < 0)
        right = (u >= 0) & (u <= 1)
        out = np.zeros(t.shape)
        out = np.where(left, smoothstep(u + 1.0, order), out)
        sign = -1.0 if order > 0 else 1.0
        tail = smoothstep(u, order) * sign if order > 0 else 1.0 - smoothstep(u)
        return np.where(right, tail, out)

    def eta(self, k: int, t, order: int = 0):
        return sum(self.zeta(j, t, order) for j in (k - 1, k, k + 1))

    @property
    def constants(self) -> dict:
        u = np.linspace(0.0, 1.0, 20001)
        return {j: float(np.max(np.abs(smoothstep(u, j)))) for j in range(0, 4)}

    def ks(self):
        return range(self.k_min, self.k_max + 1)


# ---------------------------------------------------------------------------
# data and fields


@dataclass
class ProblemData:
    h: Callable | None = None
    f: Callable | None = None
    g: Callable | None = None

    def h_at(self, x, z):
        return np.zeros(np.shape(x)) if self.h is None else np.asarray(self.h(x, z), dtype=float)

    def f_at(self, x):
        return np.zeros(np.shape(x)) if self.f is None else np.asarray(self.f(x), dtype=float) * np.ones(np.shape(x))

    def g_at(self, x):
        return np.zeros(np.shape(x)) if self.g is None else np.asarray(self.g(x), dtype=float) * np.ones(np.shape(x))


@dataclass
class AnalyticField:
    """A field given by closed forms, usable wherever a global solution is."""

    fn: Callable
    grad: Callable

    def value(self, x, z):
        return np.asarray(self.fn(x, z), dtype=float) * np.ones(np.shape(x))

    def gradient(self, x, z):
        gx, gz = self.grad(x, z)
        one = np.ones(np.shape(x))
        return np.asarray(gx) * one, np.asarray(gz) * one


ZERO_FIELD = AnalyticField(lambda x, z: 0.0, lambda x, z: (0.0, 0.0))


def _top_normal(profile: SurfaceProfile, x):
    e1 = profile.eta(x, 1)
    n = np.sqrt(1.0 + e1**2)
    return -e1 / n, 1.0 / n, n


def _bottom_normal(profile: SurfaceProfile, x):
    l1 = profile.bottom(x, 1)
    n = np.sqrt(1.0 + l1**2)
    return l1 / n, -1.0 / n, n


# ---------------------------------------------------------------------------
# global chart (ln x, s)


@dataclass
class DomainChart:
    profile: SurfaceProfile
    x_min: float
    x_max: float

    @property
    def xi_range(self):
        return np.log(self.x_min), np.log(self.x_max)

    def forward(self, xi, s):
        x = np.exp(xi)
        return x, self.profile.bottom(x) + s * self.profile.depth(x)

    def inverse(self, x, z):
        return np.log(x), (z - self.profile.bottom(x)) / self.profile.depth(x)

    def _m(self, x, s):
        return self.profile.eta(x, 1) * s + self.profile.bottom(x, 1) * (1.0 - s)

    def coefficient(self, xi, s):
        x = np.exp(xi)
        D = self.profile.depth(x)
        m = self._m(x, s)
        A = np.empty(np.shape(xi) + (2, 2))
        A[..., 0, 0] = D / x
        A[..., 0, 1] = A[..., 1, 0] = -m
        A[..., 1, 1] = x * (1.0 + m * m) / D
        return A

    def jacobian_det(self, xi, s):
        x = np.exp(xi)
        return x * self.profile.depth(x)

    def physical_gradient(self, xi, s, u_xi, u_s):
        x = np.exp(xi)
        D = self.profile.depth(x)
        return u_xi / x - self._m(x, s) * u_s / D, u_s / D


@dataclass
class GlobalSolution:
    chart: DomainChart
    xi: np.ndarray
    s: np.ndarray
    values: np.ndarray
    kind: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self._spline = RectBivariateSpline(self.xi, self.s, self.values, kx=5, ky=5)

    def _chart(self, x, z):
        x = np.asarray(x, dtype=float)
        xi, s = self.chart.inverse(np.maximum(x, self.chart.x_min), z)
        return np.clip(xi, self.xi[0], self.xi[-1]), np.clip(s, 0.0, 1.0)

    def value(self, x, z):
        xi, s = self._chart(x, z)
        return self._spline.ev(xi, s)

    def gradient(self, x, z):
        xi, s = self._chart(x, z)
        return self.chart.physical_gradient(xi, s, self._spline.ev(xi, s, dx=1), self._spline.ev(xi, s, dy=1))

    def nodes_physical(self):
        XI, S = np.meshgrid(self.xi, self.s, indexing="ij")
        return self.chart.forward(XI, S)


def compatibility_defect(profile: SurfaceProfile, data: ProblemData, x_max: float, n: int = 4001) -> tuple:
    """(int h, int f ds + int g ds) over the truncated domain."""
    x = np.linspace(0.0, x_max, n)
    s = np.linspace(0.0, 1.0, 201)
    X, S = np.meshgrid(x, s, indexing="ij")
    Z = profile.bottom(X) + S * profile.depth(X)
    inner = simpson(data.h_at(X, Z) * profile.depth(X), x=s, axis=1)
    ih = float(simpson(inner, x=x))
    _, _, nt = _top_normal(profile, x)
    _, _, nb = _bottom_normal(profile, x)
    ib = float(simpson(data.f_at(x) * nt, x=x) + simpson(data.g_at(x) * nb, x=x))
    return ih, ib


def check_compatibility(kind: str, profile: SurfaceProfile, data: ProblemData, x_max: float,
                        far_field=None, tol: float = 1e-6):
    kind = kind.upper()
    if kind == "DVP":
        x0 = np.array([0.0])
        fa, ga = float(data.f_at(x0)[0]), float(data.g_at(x0)[0])
        if abs(fa - ga) > tol * max(1.0, abs(fa), abs(ga)):
            raise CompatibilityError(f"corner values differ: f(X_c) = {fa:.6g}, g(X_c) = {ga:.6g}")
    if kind == "NVP" and far_field is None:
        ih, ib = compatibility_defect(profile, data, x_max)
        if abs(ih - ib) > tol * max(1.0, abs(ih), abs(ib)):
            raise CompatibilityError(
                f"Neumann compatibility violated: int h = {ih:.6g}, boundary flux = {ib:.6g}")


def solve_global(kind: str, profile: SurfaceProfile, data: ProblemData, x_max: float | None = None,
                 n_xi: int = 321, n_s: int = 33, x_min: float | None = None, far_field=None,
                 richardson: bool = True) -> GlobalSolution:
    """Low-order solve of the whole truncated domain on the graded chart."""
    info = build_domain(profile, None, x_max)
    x_max = info.x_max
    delta = profile.patch_radius
    if x_min is None:
        x_min = 1e-7 * delta
    chart = DomainChart(profile, x_min, x_max)
    top, bottom = problem_bcs(kind)
    xi = np.linspace(*chart.xi_range, n_xi)
    s = np.linspace(0.0, 1.0, n_s)

    def source(XI, S):
        x, z = chart.forward(XI, S)
        return chart.jacobian_det(XI, S) * data.h_at(x, z)

    sides = {}
    if top == "dirichlet":
        sides["top"] = SideCondition("dirichlet", lambda XI, S: data.f_at(np.exp(XI)))
    else:
        sides["top"] = SideCondition("neumann", lambda XI, S: data.f_at(np.exp(XI)) * np.exp(XI)
                                     * _top_normal(profile, np.exp(XI))[2])
    if bottom == "dirichlet":
        sides["bottom"] = SideCondition("dirichlet", lambda XI, S: data.g_at(np.exp(XI)))
    else:
        sides["bottom"] = SideCondition("neumann", lambda XI, S: data.g_at(np.exp(XI)) * np.exp(XI)
                                        * _bottom_normal(profile, np.exp(XI))[2])
    if far_field is not None:
        sides["right"] = SideCondition("dirichlet", lambda XI, S: far_field(*chart.forward(XI, S)))
    elif top == "dirichlet" and bottom == "dirichlet":
        sides["right"] = SideCondition("dirichlet", lambda XI, S: S * data.f_at(np.exp(XI))
                                       + (1 - S) * data.g_at(np.exp(XI)))
    elif top == "dirichlet":
        sides["right"] = SideCondition("dirichlet", lambda XI, S: data.f_at(np.exp(XI)))
    res = (solve_q1_extrapolated if richardson else solve_q1)(xi, s, chart.coefficient, source, sides)
    return GlobalSolution(chart, xi, s, res.values, kind.upper(),
                          {"n_xi": n_xi, "n_s": n_s, "x_min": x_min, "x_max": x_max,
                           "residual": res.residual, "richardson": richardson})


# ---------------------------------------------------------------------------
# cone maps and localization


@dataclass
class ConeMap:
    """T_c (or its regularized version) from the cone K onto the corner patch."""

    profile: SurfaceProfile
    regularized: RegularizedMap | None = None

    @property
    def omega1(self):
        return self.profile.omega1

    @property
    def omega2(self):
        return self.profile.omega2

    def forward(self, X):
        return map_Tc(X, self.profile) if self.regularized is None else self.regularized.forward_cone(X)

    def inverse(self, Y):
        return map_Tc_inv(Y, self.profile) if self.regularized is None else self.regularized.inverse_cone(Y)

    def jacobian(self, X):
        return jacobian_Tc(X, self.profile) if self.regularized is None else self.regularized.jacobian_cone(X)

    def coefficient(self, X):
        """J DT^{-1} DT^{-T}: the divergence-form matrix of the pulled-back Laplacian."""
        D = self.jacobian(X)
        Dinv = np.linalg.inv(D)
        J = np.linalg.det(D)
        return J[..., None, None] * (Dinv @ np.swapaxes(Dinv, -1, -2))

    def det(self, X):
        return np.linalg.det(self.jacobian(X))

    def stretch(self, X, angle):
        """|DT tau| for the unit tangent tau along the ray at ``angle``."""
        tau = np.array([np.cos(angle), np.sin(angle)])
        return np.linalg.norm(self.jacobian(X) @ tau, axis=-1)


def cone_map(profile: SurfaceProfile, regularized: bool = False, cutoff: float | None = None) -> ConeMap:
    if not regularized:
        return ConeMap(profile)
    bundle, _, _ = build_regularized_map(profile, cutoff=cutoff)
    return ConeMap(profile, bundle.s_field)


@dataclass
class ConeData:
    """Data of the divergence-form problem on the cone patch.

    ``H(X)`` is J h_c o T at cone points; ``top``/``bottom`` are (kind, fn(r))
    with Dirichlet values or conormal fluxes per unit length of the edge.
    """

    cmap: ConeMap
    H: Callable
    top: tuple
    bottom: tuple
    radius: float
    meta: dict = field(default_factory=dict)


def _ray_points(r, angle):
    return np.stack([r * np.cos(angle), r * np.sin(angle)], axis=-1)


def localize(u, data: ProblemData, cutoff: CutoffSpec, cmap: ConeMap, kind: str = "MBVP") -> ConeData:
    """Cone data of chi_c u, with h_c = chi h + (Laplace chi) u + 2 grad chi . grad u."""
    if u is None:
        raise UsageError("localization needs an approximate solution for the commutator terms")
    top, bottom = problem_bcs(kind)
    profile = cmap.profile

    def h_phys(x, z):
        ux, uz = u.gradient(x, z)
        cx, cz = cutoff.gradient(x, z)
        r = np.hypot(x, z)
        return (cutoff.chi(r) * data.h_at(x, z) + cutoff.laplacian(x, z) * u.value(x, z)
                + 2.0 * (cx * ux + cz * uz))

    def H(X):
        Y = cmap.forward(X)
        return cmap.det(X) * h_phys(Y[..., 0], Y[..., 1])

    def edge(angle, which, bc):
        def fn(r):
            r = np.asarray(r, dtype=float)
            X = _ray_points(r, angle)
            Y = cmap.forward(X)
            x, z = Y[..., 0], Y[..., 1]
            chi = cutoff.chi(np.hypot(x, z))
            datum = data.f_at(x) if which == "top" else data.g_at(x)
            if bc == "dirichlet":
                return chi * datum
            nx, nz, _ = (_top_normal if which == "top" else _bottom_normal)(profile, x)
            cx, cz = cutoff.gradient(x, z)
            return (chi * datum + (cx * nx + cz * nz) * u.value(x, z)) * cmap.stretch(X, angle)
        return fn

    return ConeData(cmap, H, (top, edge(cmap.omega1, "top", top)),
                    (bottom, edge(-cmap.omega2, "bottom", bottom)), cutoff.delta,
                    {"delta": cutoff.delta})


# ---------------------------------------------------------------------------
# cone patch


@dataclass
class ConePatchResult:
    v_c: GridFunction
    method: str
    iterations: int = 0
    contraction: float | None = None
    cross_difference: float | None = None
    residual: float = 0.0
    meta: dict = field(default_factory=dict)


def _cone_chart(cdata: ConeData, n_t: int, n_theta: int, depth: float):
    t_hi = np.log(1.5 * cdata.radius)
    t = np.linspace(t_hi - depth, t_hi, n_t)
    q = np.linspace(-cdata.cmap.omega2, cdata.cmap.omega1, n_theta)
    return t, q


def _direct_cone(cdata: ConeData, t, q, richardson=True):
    cmap = cdata.cmap

    def X_of(T, Q):
        return _ray_points(np.exp(T), Q)

    def coef(T, Q):
        B = cmap.coefficient(X_of(T, Q))
        c, s = np.cos(Q), np.sin(Q)
        R = np.empty(np.shape(T) + (2, 2))
        R[..., 0, 0], R[..., 0, 1], R[..., 1, 0], R[..., 1, 1] = c, -s, s, c
        return np.swapaxes(R, -1, -2) @ B @ R

    def source(T, Q):
        return np.exp(2 * T) * cdata.H(X_of(T, Q))

    def side(cond):
        kind, fn = cond
        if kind == "dirichlet":
            return SideCondition("dirichlet", lambda T, Q: fn(np.exp(T)))
        return SideCondition("neumann", lambda T, Q: fn(np.exp(T)) * np.exp(T))

    sides = {"top": side(cdata.top), "bottom": side(cdata.bottom), "right": SideCondition("dirichlet")}
    res = (solve_q1_extrapolated if richardson else solve_q1)(t, q, coef, source, sides)
    return res


def _divergence_matrix(B, X, h=1e-6):
    """Row divergence d_i B_ij of a matrix field by central differences."""
    ex = np.array([h, 0.0])
    ez = np.array([0.0, h])
    dBx = (B(X + ex) - B(X - ex)) / (2 * h)
    dBz = (B(X + ez) - B(X - ez)) / (2 * h)
    return dBx[..., 0, :] + dBz[..., 1, :]


def _fixed_point(cdata: ConeData, t, q, beta_contour, tol, max_iter, n_cheb=48):
    cmap = cdata.cmap
    top_bc, bot_bc = cdata.top[0], cdata.bottom[0]
    spec = WedgeSpec(cmap.omega1, cmap.omega2, top_bc, bot_bc)
    J0 = float(cmap.det(np.zeros((1, 2)))[0])
    T, Q = np.meshgrid(t, q, indexing="ij")
    X = _ray_points(np.exp(T), Q)
    B = cmap.coefficient(X) / J0
    pert = B - np.eye(2)
    divB = _divergence_matrix(lambda Z: cmap.coefficient(Z) / J0, X, h=1e-6 * max(cdata.radius, 1e-3))
    support = 1.5 * cdata.radius

    def grid_callable(values):
        interp = tensor_spline(t, q, values, fill=0.0)

        def fn(r, qq):
            return interp(np.log(np.asarray(r, dtype=float)), qq)
        return fn

    def edge_fn(cond, corr=None):
        kind, fn = cond
        if corr is None:
            return lambda r: fn(r) / (J0 if kind == "neumann" else 1.0)
        spline = CubicSpline(t, corr)

        def out(r):
            tt = np.log(np.asarray(r, dtype=float))
            inside = (tt >= t[0]) & (tt <= t[-1])
            return fn(r) / J0 - np.where(inside, spline(np.clip(tt, t[0], t[-1])), 0.0)
        return out

    def h_exact(r, qq):
        r, qq = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(qq, dtype=float))
        return cdata.H(_ray_points(r, qq)) / J0

    def h_corrected(corr_fn):
        return lambda r, qq: h_exact(r, qq) - corr_fn(r, qq)

    v = None
    diffs = []
    h_data = h_exact
    f_data = edge_fn(cdata.top)
    g_data = edge_fn(cdata.bottom)
    it = 0
    for it in range(1, max_iter + 1):
        prob = WedgeProblem(spec, h=h_data, f=f_data, g=g_data, support=support)
        sol = solve_wedge(prob, beta_contour, n_t=len(t), n_theta=len(q) - 1, t_min=t[0], t_max=t[-1],
                          n_cheb=n_cheb)
        new = sol.values
        if v is not None:
            diffs.append(float(np.max(np.abs(new - v))) / max(1e-300, float(np.max(np.abs(new)))))
        v = new
        if diffs and diffs[-1] < tol:
            break
        if len(diffs) >= 3 and diffs[-1] > diffs[-2] > diffs[-3]:
            raise SolverError("perturbation iteration diverges")
        if float(np.max(np.abs(pert))) == 0.0:
            break
        d = sol.cartesian_derivatives(t, q)
        grad = np.stack([d["vx"], d["vz"]], axis=-1)
        hess = np.stack([np.stack([d["vxx"], d["vxz"]], -1), np.stack([d["vxz"], d["vzz"]], -1)], -2)
        corr = np.einsum("...j,...j->...", divB, grad) + np.einsum("...ij,...ij->...", pert, hess)
        h_data = h_corrected(grid_callable(corr))
        flux = pert @ grad[..., None]
        if top_bc == "neumann":
            n_top = np.array([-np.sin(cmap.omega1), np.cos(cmap.omega1)])
            f_data = edge_fn(cdata.top, (flux[:, -1, :, 0] @ n_top))
        if bot_bc == "neumann":
            n_bot = np.array([np.sin(-cmap.omega2), -np.cos(-cmap.omega2)])
            g_data = edge_fn(cdata.bottom, (flux[:, 0, :, 0] @ n_bot))
    contraction = None
    if len(diffs) >= 2:
        contraction = float(np.exp(np.mean(np.log(np.array(diffs[1:]) / np.array(diffs[:-1])))))
    converged = bool(diffs and diffs[-1] < tol) or float(np.max(np.abs(pert))) == 0.0
    return v, it, contraction, converged


def solve_cone_patch(cdata: ConeData, beta_contour: float = 0.5, method: str = "direct",
                     n_t: int = 961, n_theta: int = 33, depth: float = 12.0, tol: float = 1e-8,
                     max_iter: int = 12, richardson: bool = True) -> ConePatchResult:
    """Solve the pulled-back problem for chi_c u on the log-polar cone chart.

    ``method``: 'direct' (bilinear elements with the full coefficient),
    'fixed_point' (iteration around the model wedge) or 'both'.  With both,
    the direct solution is returned and the difference is recorded.
    """
    if method not in ("direct", "fixed_point", "both"):
        raise UsageError(f"unknown cone-patch method {method!r}")
    t, q = _cone_chart(cdata, n_t, n_theta, depth)
    meta = {"omega1": cdata.cmap.omega1, "omega2": cdata.cmap.omega2}
    direct = None
    fixed = None
    it, contraction = 0, None
    errors = []
    if method in ("direct", "both"):
        try:
            direct = _direct_cone(cdata, t, q, richardson)
        except SolverError as exc:
            errors.append(str(exc))
    if method in ("fixed_point", "both"):
        try:
            fixed, it, contraction, ok = _fixed_point(cdata, t, q, beta_contour, tol, max_iter)
            if not ok:
                errors.append("perturbation iteration did not reach the tolerance")
                if direct is None:
                    direct = _direct_cone(cdata, t, q, richardson)
                fixed = None if direct is not None else fixed
        except SolverError as exc:
            errors.append(str(exc))
            if direct is None:
                direct = _direct_cone(cdata, t, q, richardson)
    if direct is None and fixed is None:
        raise SolverError("cone patch: both solution paths failed: " + "; ".join(errors))
    cross = None
    if direct is not None and fixed is not None:
        scale = max(1e-300, float(np.max(np.abs(direct.values))))
        cross = float(np.max(np.abs(direct.values - fixed))) / scale
    if direct is not None:
        values, used, residual = direct.values, "direct", direct.residual
    else:
        values, used, residual = fixed, "fixed_point", 0.0
    meta["notes"] = errors
    return ConePatchResult(GridFunction("cone", (t, q), values, 4, meta), used, it, contraction,
                           cross, residual, meta)


# ---------------------------------------------------------------------------
# strip


@dataclass
class StripData:
    """Data on the flat strip, in the conventions of the pulled-back problem
    (1/J) div(J P_R grad v) = h_R.  Fluxes are per unit x."""

    h: Callable | None = None
    top: tuple = ("dirichlet", None)
    bottom: tuple = ("neumann", None)
    far: tuple | None = None
    near: tuple | None = None


@dataclass
class StripSolution:
    v_R: GridFunction
    residual: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self._spline = RectBivariateSpline(self.v_R.nodes[0], self.v_R.nodes[1], self.v_R.values, kx=5, ky=5)

    def value(self, x, z):
        return self._spline.ev(x, z)


def strip_coefficient(profile: SurfaceProfile):
    def coef(x, z):
        D = profile.depth(x)
        m = profile.eta(x, 1) * z + profile.bottom(x, 1) * (1.0 - z)
        A = np.empty(np.shape(x) + (2, 2))
        A[..., 0, 0] = D
        A[..., 0, 1] = A[..., 1, 0] = -m
        A[..., 1, 1] = (1.0 + m * m) / D
        return A
    return coef


def solve_strip(sdata: StripData, profile: SurfaceProfile, x_lo: float, x_hi: float,
                n_x: int = 257, n_z: int = 33, richardson: bool = False) -> StripSolution:
    """Bilinear-element solve on [x_lo, x_hi] x [0, 1], geometric in x."""
    if x_lo <= 0 or np.any(profile.depth(np.linspace(x_lo, x_hi, 2001)) <= 0):
        raise DomainError("strip must stay where the depth is positive")
    # geometric spacing resolves the cutoff ramp next to the corner
    x = x_lo * (x_hi / x_lo) ** np.linspace(0.0, 1.0, n_x)
    z = np.linspace(0.0, 1.0, n_z)
    coef = strip_coefficient(profile)

    def source(X, Z):
        if sdata.h is None:
            return np.zeros(np.shape(X))
        return profile.depth(X) * sdata.h(X, Z)

    def side(cond):
        kind, fn = cond
        if fn is None:
            return SideCondition(kind)
        return SideCondition(kind, lambda X, Z: fn(X) * np.ones(np.shape(X)))

    sides = {"top": side(sdata.top), "bottom": side(sdata.bottom)}
    for name, cond in (("right", sdata.far), ("left", sdata.near)):
        if cond is not None:
            kind, fn = cond
            sides[name] = SideCondition(kind, None if fn is None else (lambda X, Z, fn=fn: fn(X, Z)))
    res = (solve_q1_extrapolated if richardson else solve_q1)(x, z, coef, source, sides)
    if res.residual > 1e-10:
        raise SolverError(f"strip solve residual {res.residual:.2e}")
    return StripSolution(GridFunction("strip", (x, z), res.values, 4), res.residual,
                         {"n_x": n_x, "n_z": n_z})


def strip_data_from(u, data: ProblemData, cutoff: CutoffSpec, profile: SurfaceProfile, kind: str,
                    far=None) -> StripData:
    """Data of (1 - chi_c) u pulled back to the strip."""
    top, bottom = problem_bcs(kind)

    def h_R(x, z):
        X, Z = map_TR(np.stack([x, z], -1), profile)[..., 0], map_TR(np.stack([x, z], -1), profile)[..., 1]
        ux, uz = u.gradient(X, Z)
        cx, cz = cutoff.gradient(X, Z)
        r = np.hypot(X, Z)
        return ((1 - cutoff.chi(r)) * data.h_at(X, Z) - cutoff.laplacian(X, Z) * u.value(X, Z)
                - 2.0 * (cx * ux + cz * uz))

    def edge(which, bc):
        def fn(x):
            x = np.asarray(x, dtype=float)
            z = profile.eta(x) if which == "top" else profile.bottom(x)
            r = np.hypot(x, z)
            datum = data.f_at(x) if which == "top" else data.g_at(x)
            if bc == "dirichlet":
                return (1 - cutoff.chi(r)) * datum
            nx, nz, stretch = (_top_normal if which == "top" else _bottom_normal)(profile, x)
            cx, cz = cutoff.gradient(x, z)
            return ((1 - cutoff.chi(r)) * datum - (cx * nx + cz * nz) * u.value(x, z)) * stretch
        return fn

    return StripData(h_R, (top, edge("top", top)), (bottom, edge("bottom", bottom)), far)


# ---------------------------------------------------------------------------
# full problem


@dataclass
class FullSolution:
    v_c: GridFunction
    v_R: GridFunction
    u: GlobalSolution
    problem_kind: str
    cmap: ConeMap
    cutoff: CutoffSpec
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self._strip = RectBivariateSpline(self.v_R.nodes[0], self.v_R.nodes[1], self.v_R.values, kx=5, ky=5)
        self._cone = RectBivariateSpline(self.v_c.t, self.v_c.theta, self.v_c.values, kx=5, ky=5)

    def cone_part(self, x, z):
        X = self.cmap.inverse(np.stack([np.asarray(x, float), np.asarray(z, float)], -1))
        r = np.hypot(X[..., 0], X[..., 1])
        t = np.log(np.maximum(r, 1e-300))
        q = np.arctan2(X[..., 1], X[..., 0])
        t_lo, t_hi = self.v_c.t[0], self.v_c.t[-1]
        val = self._cone.ev(np.clip(t, t_lo, t_hi), np.clip(q, self.v_c.theta[0], self.v_c.theta[-1]))
        return np.where(t <= t_hi, val, 0.0)

    def strip_part(self, x, z):
        P = map_TR_inv(np.stack([np.asarray(x, float), np.asarray(z, float)], -1), self.cmap.profile)
        xs, zs = P[..., 0], P[..., 1]
        x_lo, x_hi = self.v_R.nodes[0][0], self.v_R.nodes[0][-1]
        val = self._strip.ev(np.clip(xs, x_lo, x_hi), np.clip(zs, 0, 1))
        return np.where(xs >= x_lo, val, 0.0)

    def assembled(self, x, z):
        return self.cone_part(x, z) + self.strip_part(x, z)


def _overlap_points(profile: SurfaceProfile, cutoff: CutoffSpec, n_r=24, n_q=17):
    r = np.linspace(0.55 * cutoff.delta, 0.95 * cutoff.delta, n_r)
    x = []
    z = []
    for rr in r:
        # physical points on the arc |p| = rr inside the domain
        qs = np.linspace(-profile.omega2, profile.omega1, n_q)[1:-1]
        xx, zz = rr * np.cos(qs), rr * np.sin(qs)
        keep = (zz < profile.eta(xx)) & (zz > profile.bottom(xx))
        x.append(xx[keep])
        z.append(zz[keep])
    return np.concatenate(x), np.concatenate(z)


def solve_full(problem_kind: str, profile: SurfaceProfile, data: ProblemData, l: int = 2,
               beta: float = 0.0, regularized: bool = False, cone_method: str = "direct",
               n_xi: int = 321, n_s: int = 33, n_t: int = 961, n_theta: int = 33, n_x: int = 321,
               n_z: int = 33, x_max: float | None = None, far_field=None, overlap_tol: float = 1e-5,
               beta_contour: float | None = None, decompose: bool = True) -> FullSolution:
    """Solve (MBVP), (DVP) or (NVP) and split the solution into cone and strip parts."""
    kind = problem_kind.upper()
    problem_bcs(kind)
    check_angle(profile.omega, kind)
    info = build_domain(profile, None, x_max)
    x_max = info.x_max
    check_compatibility(kind, profile, data, x_max, far_field)
    u = solve_global(kind, profile, data, x_max, n_xi, n_s, far_field=far_field)
    cutoff = CutoffSpec(profile.patch_radius)
    cmap = cone_map(profile, regularized, cutoff=2.5 * cutoff.delta if regularized else None)
    meta = {"global": u.meta, "l": l, "beta": beta}
    if not decompose:
        empty_c = GridFunction("cone", (np.linspace(-8, 0, 9), np.linspace(-profile.omega2, profile.omega1, 7)),
                               np.zeros((9, 7)))
        empty_r = GridFunction("strip", (np.linspace(1, 2, 7), np.linspace(0, 1, 7)), np.zeros((7, 7)))
        return FullSolution(empty_c, empty_r, u, kind, cmap, cutoff, meta)
    cdata = localize(u, data, cutoff, cmap, kind)
    if beta_contour is None:
        beta_contour = -0.5 if kind == "MBVP" else 0.5
    patch = solve_cone_patch(cdata, beta_contour, cone_method, n_t=n_t, n_theta=n_theta)
    x_lo = info.x_delta
    top, bottom = problem_bcs(kind)
    if far_field is not None:
        far = ("dirichlet", lambda X, Z: far_field(*[map_TR(np.stack([X, Z], -1), profile)[..., i]
                                                     for i in (0, 1)]))
    elif top == "dirichlet" and bottom == "dirichlet":
        far = ("dirichlet", lambda X, Z: Z * data.f_at(X) + (1 - Z) * data.g_at(X))
    elif top == "dirichlet":
        far = ("dirichlet", lambda X, Z: data.f_at(X))
    else:
        far = None
    sdata = strip_data_from(u, data, cutoff, profile, kind, far)
    strip = solve_strip(sdata, profile, x_lo, x_max, n_x, n_z, richardson=True)
    if kind == "NVP" and far is None:
        # both pieces carry their own gauge; fix the strip constant from the global solution
        xs, zs = strip.v_R.nodes
        Xs, Zs = np.meshgrid(xs, zs, indexing="ij")
        P = map_TR(np.stack([Xs, Zs], -1), profile)
        ref = (1 - cutoff.chi(np.hypot(P[..., 0], P[..., 1]))) * u.value(P[..., 0], P[..., 1])
        far_mask = Xs > 2 * cutoff.delta
        shift = float(np.mean((ref - strip.v_R.values)[far_mask]))
        strip = StripSolution(strip.v_R.with_values(strip.v_R.values + shift * (1 - 0 * Xs)),
                              strip.residual, strip.meta)
    sol = FullSolution(patch.v_c, strip.v_R, u, kind, cmap, cutoff, meta)
    px, pz = _overlap_points(profile, cutoff)
    ug = u.value(px, pz)
    ua = sol.assembled(px, pz)
    scale = max(1e-300, float(np.max(np.abs(ug))), float(np.max(np.abs(u.values))))
    mismatch = float(np.max(np.abs(ua - ug))) / scale if px.size else 0.0
    meta.update({"cone": {"method": patch.method, "iterations": patch.iterations,
                          "contraction": patch.contraction, "cross_difference": patch.cross_difference,
                          "residual": patch.residual, "n_t": n_t, "n_theta": n_theta},
                 "strip": {"residual": strip.residual, "n_x": n_x, "n_z": n_z},
                 "overlap_mismatch": mismatch})
    if mismatch > overlap_tol:
        raise AssemblyError(f"chart mismatch {mismatch:.2e} on the overlap exceeds {overlap_tol:.0e}")
    return sol


# ---------------------------------------------------------------------------
# partition and local estimates on the log-polar strip


def partition_norm_check(w: GridFunction, l: int, beta0: float, partition: PartitionSpec,
                         bracket=(0.5, 2.0)):
    """(sqrt(sum_k ||zeta_k w||^2), ||w||, ratio, pass) in W^l_{2, beta0}."""
    glob = wnorm_strip(w, l, beta0, tail_tol=1.0).value
    total = 0.0
    for k in partition.ks():
        z = partition.zeta(k, w.t)[:, None]
        total += wnorm_strip(w.with_values(z * w.values), l, beta0, tail_tol=1.0).value ** 2
    part = float(np.sqrt(total))
    if glob == 0.0:
        return part, glob, 1.0, part == 0.0
    ratio = part / glob
    return part, glob, ratio, bracket[0] <= ratio <= bracket[1]


@dataclass
class LocalStepResult:
    k: int
    patch_solution: np.ndarray
    target: np.ndarray
    recovery_error: float
    ratio: float
    data_norm: float
    lower_norm: float
    solution_norm: float


def _hl(values, t, q, l):
    gf = GridFunction("strip", (t, q), values, 4)
    from .weighted_spaces import hnorm_strip
    return hnorm_strip(gf, l)


def local_elliptic_step(w: GridFunction, k: int, partition: PartitionSpec, l: int = 2,
                        coefficient: Callable | None = None, bc_pair=("dirichlet", "neumann"),
                        F: np.ndarray | None = None, richardson: bool = True) -> LocalStepResult:
    """Solve for zeta_k w on [k-1, k+1] x I from the localized system.

    ``w`` lives on a (t, theta) chart and solves div(P grad w) = F with the
    boundary values of ``bc_pair``; ``coefficient(T, Q)`` gives P (identity
    when None).  The patch data are zeta_k F plus the commutator
    2 (P grad zeta) . grad w + w div(P grad zeta), the boundary data zeta_k
    times those of w plus the conormal commutator (P grad zeta . n) w.
    """
    t, q = w.t, w.theta
    ht, hq = t[1] - t[0], q[1] - q[0]
    T, Q = np.meshgrid(t, q, indexing="ij")
    P = np.broadcast_to(np.eye(2), T.shape + (2, 2)).copy() if coefficient is None else coefficient(T, Q)
    W = w.values
    wt, wq = fd_derivative(W, ht, 0), fd_derivative(W, hq, 1)
    flux_t = P[..., 0, 0] * wt + P[..., 0, 1] * wq
    flux_q = P[..., 1, 0] * wt + P[..., 1, 1] * wq
    if F is None:
        F = fd_derivative(flux_t, ht, 0) + fd_derivative(flux_q, hq, 1)
    z = partition.zeta(k, T)
    z1 = partition.zeta(k, T, 1)
    z2 = partition.zeta(k, T, 2)
    # P grad zeta = zeta' (P_tt, P_qt)
    comm = 2 * z1 * (P[..., 0, 0] * wt + P[..., 0, 1] * wq) + W * (
        fd_derivative(P[..., 0, 0], ht, 0) * z1 + P[..., 0, 0] * z2 + fd_derivative(P[..., 1, 0], hq, 1) * z1)
    Fk = z * F + comm
    mask = (t >= k - 1) & (t <= k + 1)
    tk = t[mask]
    Fk_loc = Fk[mask]
    top, bottom = normalize_bc_pair(bc_pair)
    def interp(values):
        return tensor_spline(tk, q, values)

    coef_k = interp(P[mask].reshape(len(tk), len(q), 4))

    def coef(TT, QQ):
        return coef_k(TT, QQ).reshape(np.shape(TT) + (2, 2))

    # the partition factors are evaluated exactly; only smooth fields are interpolated
    smooth = np.stack([F, flux_t, W * (fd_derivative(P[..., 0, 0], ht, 0) + fd_derivative(P[..., 1, 0], hq, 1)),
                       W * P[..., 0, 0]], -1)[mask]
    smooth_at = interp(smooth)

    def src(TT, QQ):
        v = smooth_at(TT, QQ)
        z0, z1_, z2_ = (partition.zeta(k, TT, j) for j in range(3))
        return z0 * v[..., 0] + 2 * z1_ * v[..., 1] + z1_ * v[..., 2] + z2_ * v[..., 3]
    zk = z[mask]
    top_val = zk[:, -1] * W[mask][:, -1]
    bot_val = zk[:, 0] * W[mask][:, 0]
    top_flux = zk[:, -1] * flux_q[mask][:, -1] + z1[mask][:, -1] * P[mask][:, -1, 1, 0] * W[mask][:, -1]
    bot_flux = -(zk[:, 0] * flux_q[mask][:, 0] + z1[mask][:, 0] * P[mask][:, 0, 1, 0] * W[mask][:, 0])

    def edge(j, sign, dirichlet):
        Wm, Fm, Pm = W[mask][:, j], flux_q[mask][:, j], P[mask][:, j, 1, 0] * W[mask][:, j]
        sp_w, sp_f, sp_p = CubicSpline(tk, Wm), CubicSpline(tk, Fm), CubicSpline(tk, Pm)
        if dirichlet:
            return lambda TT, QQ: partition.zeta(k, TT) * sp_w(TT)
        return lambda TT, QQ: sign * (partition.zeta(k, TT) * sp_f(TT) + partition.zeta(k, TT, 1) * sp_p(TT))

    sides = {"left": SideCondition("dirichlet"), "right": SideCondition("dirichlet")}
    sides["top"] = SideCondition(top, edge(-1, 1.0, top == "dirichlet"))
    sides["bottom"] = SideCondition(bottom, edge(0, -1.0, bottom == "dirichlet"))
    res = (solve_q1_extrapolated if richardson else solve_q1)(tk, q, coef, src, sides)
    target = (z * W)[mask]
    scale = max(1e-300, float(np.max(np.abs(target))))
    err = float(np.max(np.abs(res.values - target))) / scale if np.any(target) else float(np.max(np.abs(res.values)))
    sol_norm = _hl(res.values, tk, q, l)
    data_norm = _hl(Fk_loc, tk, q, max(l - 2, 0))
    data_norm += fractional_norm_1d(top_val if top == "dirichlet" else top_flux, ht, l - 0.5 if top == "dirichlet" else l - 1.5)
    data_norm += fractional_norm_1d(bot_val if bottom == "dirichlet" else bot_flux, ht, l - 0.5 if bottom == "dirichlet" else l - 1.5)
    eta = partition.eta(k, T)[mask]
    lower = _hl(eta * W[mask], tk, q, l - 1)
    denom = data_norm + lower
    ratio = sol_norm / denom if denom > 0 else 0.0
    return LocalStepResult(k, res.values, target, err, ratio, data_norm, lower, sol_norm)
