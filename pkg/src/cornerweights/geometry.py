"""Corner domain, straightening maps and the coefficient matrices they induce.

The domain is Omega = {(x, z): l(x) < z < eta(x), x > 0} with a straight
bottom l(x) = -gamma x and the contact point at the origin.  Points are
numpy arrays whose last axis holds the two coordinates.

Matrix conventions: ``jacobian_*`` returns D T with D T[i, j] = d out_i /
d in_j.  The coefficient P of a map T is (D T)^{-T} evaluated at the
preimage, so that for v = u o T one has grad u = P grad v and the
pulled-back Laplacian is (1/J) div(J P^T P grad v) with J = det D T.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial import Polynomial
from scipy.interpolate import CubicSpline

from .cutoffs import smoothstep
from .errors import DomainError, GeometryError, PreconditionError, RegularizationError

ETA_KINDS = ("polynomial", "scaled_tangent", "spline")
PROBLEM_KINDS = ("MBVP", "DVP", "NVP")


def _xz(points):
    p = np.asarray(points, dtype=float)
    if p.shape[-1] != 2:
        raise DomainError("points must have a trailing axis of length 2")
    return p[..., 0], p[..., 1]


def _stack(x, z):
    return np.stack(np.broadcast_arrays(x, z), axis=-1)


def _mat(a, b, c, d):
    a, b, c, d = np.broadcast_arrays(a, b, c, d)
    return np.stack([np.stack([a, b], -1), np.stack([c, d], -1)], -2)


# ---------------------------------------------------------------------------
# surface profile


@dataclass(frozen=True)
class SurfaceProfile:
    """Upper surface eta, bottom slope gamma and patch parameters.

    ``eta_kind`` selects the closed form:

    * ``polynomial``: params are coefficients a0, a1, ... in ascending order;
    * ``scaled_tangent``: params (a, b) or (a, b, c) for a tan(b x) + c;
    * ``spline``: params are n knots followed by n values (cubic, not-a-knot).
    """

    eta_kind: str
    eta_params: tuple
    gamma: float
    x0: float = 1.0
    H: float = 1e6
    delta: float | None = None

    def __post_init__(self):
        if self.eta_kind not in ETA_KINDS:
            raise GeometryError(f"unknown eta kind {self.eta_kind!r}")
        object.__setattr__(self, "eta_params", tuple(float(p) for p in self.eta_params))
        n = len(self.eta_params)
        if self.eta_kind == "polynomial" and n == 0:
            raise GeometryError("polynomial eta needs at least one coefficient")
        if self.eta_kind == "scaled_tangent" and n not in (2, 3):
            raise GeometryError("scaled_tangent eta takes (a, b) or (a, b, c)")
        if self.eta_kind == "spline":
            if n < 8 or n % 2:
                raise GeometryError("spline eta takes n >= 4 knots followed by n values")
            knots = np.array(self.eta_params[: n // 2])
            if np.any(np.diff(knots) <= 0) or knots[0] != 0.0:
                raise GeometryError("spline knots must start at 0 and increase")
        for name in ("gamma", "x0", "H"):
            if not getattr(self, name) > 0:
                raise GeometryError(f"{name} must be positive")
        if self.delta is not None and not self.delta > 0:
            raise GeometryError("delta must be positive")

    # -- closed forms -------------------------------------------------------

    @cached_property
    def _poly(self):
        if self.eta_kind != "polynomial":
            return None
        p = Polynomial(self.eta_params)
        return [p.deriv(k) for k in range(6)]

    @cached_property
    def _spline(self):
        if self.eta_kind != "spline":
            return None
        n = len(self.eta_params) // 2
        return CubicSpline(np.array(self.eta_params[:n]), np.array(self.eta_params[n:]))

    @cached_property
    def _tan_polys(self):
        if self.eta_kind != "scaled_tangent":
            return None
        b = self.eta_params[1]
        polys = [Polynomial([0.0, 1.0])]
        one_plus = Polynomial([1.0, 0.0, 1.0])
        for _ in range(5):
            polys.append(b * polys[-1].deriv() * one_plus)
        return polys

    def eta(self, x, order: int = 0):
        x = np.asarray(x, dtype=float)
        if self.eta_kind == "polynomial":
            if order >= len(self._poly):
                return np.zeros(x.shape)
            return self._poly[order](x)
        if self.eta_kind == "spline":
            return self._spline(x, order) if order <= 3 else np.zeros(x.shape)
        a, b = self.eta_params[:2]
        c = self.eta_params[2] if len(self.eta_params) == 3 else 0.0
        T = np.tan(b * x)
        val = a * self._tan_polys[order](T)
        return val + c if order == 0 else val

    def bottom(self, x, order: int = 0):
        x = np.asarray(x, dtype=float)
        if order == 0:
            return -self.gamma * x
        if order == 1:
            return np.full(x.shape, -self.gamma)
        return np.zeros(x.shape)

    def depth(self, x):
        return self.eta(x) - self.bottom(x)

    def eta_bar(self, x, order: int = 0):
        """eta(x) + gamma x."""
        val = self.eta(x, order)
        if order == 0:
            return val + self.gamma * np.asarray(x, dtype=float)
        if order == 1:
            return val + self.gamma
        return val

    def eta_bar_inv(self, s, tol: float = 1e-13, max_iter: int = 100):
        """Monotone Newton iteration with bisection safeguard."""
        s = np.asarray(s, dtype=float)
        slope0 = float(self.eta_bar(0.0, 1))
        if slope0 <= 0:
            raise GeometryError("eta'(0) + gamma <= 0: eta_bar is not invertible")
        x = s / slope0
        lo = np.where(s >= 0, 0.0, x)
        hi = np.where(s >= 0, x, 0.0)
        # expand brackets until they contain the root
        for _ in range(80):
            f_lo = self.eta_bar(lo) - s
            f_hi = self.eta_bar(hi) - s
            bad_lo = f_lo > 0
            bad_hi = f_hi < 0
            if not (np.any(bad_lo) or np.any(bad_hi)):
                break
            span = np.maximum(np.abs(hi - lo), 1e-300) + np.abs(s) / slope0
            lo = np.where(bad_lo, lo - span, lo)
            hi = np.where(bad_hi, hi + span, hi)
        else:
            raise GeometryError("could not bracket eta_bar^{-1}")
        shape = s.shape
        x, lo, hi, s = (np.array(a, dtype=float).ravel() for a in np.broadcast_arrays(x, lo, hi, s))
        active = np.arange(x.size)
        for _ in range(max_iter):
            xa, sa = x[active], s[active]
            f = self.eta_bar(xa) - sa
            la = np.where(f < 0, xa, lo[active])
            ha = np.where(f > 0, xa, hi[active])
            fp = self.eta_bar(xa, 1)
            if np.any(fp <= 0):
                raise GeometryError("eta'(x) + gamma <= 0 on the patch")
            x_new = xa - f / fp
            outside = (x_new <= la) | (x_new >= ha)
            x_new = np.where(outside, 0.5 * (la + ha), x_new)
            done = np.abs(x_new - xa) <= tol * np.maximum(1.0, np.abs(xa))
            x[active], lo[active], hi[active] = x_new, la, ha
            active = active[~done]
            if active.size == 0:
                break
        x = x.reshape(shape)
        return x

    # -- corner quantities --------------------------------------------------

    @property
    def patch_radius(self) -> float:
        return self.delta if self.delta is not None else 0.25 * self.x0

    @property
    def omega1(self) -> float:
        return float(np.arctan(self.eta(0.0, 1)))

    @property
    def omega2(self) -> float:
        return float(np.arctan(self.gamma))

    @property
    def omega(self) -> float:
        return self.omega1 + self.omega2

    def d(self, s):
        """d(s) = 1 - 1/eta_bar'(eta_bar^{-1}(s))."""
        return 1.0 - 1.0 / self.eta_bar(self.eta_bar_inv(s), 1)

    def d_prime(self, s):
        x = self.eta_bar_inv(s)
        return self.eta(x, 2) / self.eta_bar(x, 1) ** 3

    @property
    def d0(self) -> float:
        return float(1.0 - 1.0 / self.eta_bar(0.0, 1))

    @property
    def P0(self) -> np.ndarray:
        g, d0 = self.gamma, self.d0
        return np.array([[1.0 + g * d0, g], [d0, 1.0]])

    @property
    def s_patch_radius(self) -> float:
        return 2.0 * self.patch_radius * float(np.linalg.norm(self.P0, 2))

    def describe(self) -> dict:
        return {
            "eta.kind": self.eta_kind,
            "eta.params": ",".join(f"{p:.17g}" for p in self.eta_params),
            "gamma": f"{self.gamma:.17g}",
            "x0": f"{self.x0:.17g}",
            "H": f"{self.H:.17g}",
            "delta": f"{self.patch_radius:.17g}",
        }


def linear_wedge_profile(omega1: float, omega2: float, **kw) -> SurfaceProfile:
    """Straight-sided corner with the given half angles."""
    return SurfaceProfile("polynomial", (0.0, float(np.tan(omega1))), float(np.tan(omega2)), **kw)


# ---------------------------------------------------------------------------
# wedge and domain descriptors


@dataclass(frozen=True)
class WedgeSpec:
    omega1: float
    omega2: float
    bc_top: str = "dirichlet"
    bc_bottom: str = "neumann"
    r_outer: float = 1.0

    def __post_init__(self):
        for name in ("omega1", "omega2"):
            val = getattr(self, name)
            if not (0.0 < val < 0.5 * np.pi):
                raise DomainError(f"{name}={val} outside (0, pi/2)")
        for name in ("bc_top", "bc_bottom"):
            val = str(getattr(self, name)).lower()
            if val not in ("dirichlet", "neumann"):
                raise PreconditionError(f"unknown boundary condition {val!r}")
            object.__setattr__(self, name, val)
        if not self.r_outer > 0:
            raise DomainError("r_outer must be positive")

    @property
    def omega(self) -> float:
        return self.omega1 + self.omega2

    @property
    def bc_pair(self) -> tuple[str, str]:
        return self.bc_top, self.bc_bottom

    @classmethod
    def for_problem(cls, omega1, omega2, problem_kind: str, r_outer: float = 1.0) -> "WedgeSpec":
        top, bottom = {"MBVP": ("dirichlet", "neumann"), "DVP": ("dirichlet", "dirichlet"),
                       "NVP": ("neumann", "neumann")}[problem_kind]
        return cls(omega1, omega2, top, bottom, r_outer)


@dataclass(frozen=True)
class DomainInfo:
    profile: SurfaceProfile
    omega1: float
    omega2: float
    omega: float
    delta: float
    x_delta: float
    x_max: float
    problem_kind: str | None = None
    contact: tuple = (0.0, 0.0)


def check_angle(omega: float, problem_kind: str | None):
    if not (0.0 < omega < np.pi):
        raise DomainError(f"contact angle {omega:.6g} outside (0, pi)")
    if problem_kind == "MBVP" and not omega < 0.5 * np.pi:
        raise DomainError(f"mixed problem needs contact angle < pi/2, got {omega:.6g}")


def check_depth(profile: SurfaceProfile, x_end: float, n: int = 4000):
    """Require 0 < eta - l <= H on sampled x in (0, x_end]."""
    xs = np.linspace(0.0, x_end, n + 1)[1:]
    with np.errstate(all="ignore"):
        depth = profile.depth(xs)
    if not np.all(np.isfinite(depth)):
        raise GeometryError("eta is not finite on the sampled range")
    bad = (depth <= 0) | (depth > profile.H)
    if np.any(bad):
        raise GeometryError(f"depth eta - l leaves (0, H] at x = {xs[np.argmax(bad)]:.6g}")


def build_domain(profile: SurfaceProfile, problem_kind: str | None = None,
                 x_max: float | None = None) -> DomainInfo:
    """Validate the profile and return the corner angles and patch geometry."""
    if problem_kind is not None and problem_kind not in PROBLEM_KINDS:
        raise PreconditionError(f"unknown problem kind {problem_kind!r}")
    if abs(float(profile.eta(0.0))) > 1e-12:
        raise GeometryError(f"eta(0) = {float(profile.eta(0.0)):.3e} must vanish")
    slope = float(profile.eta(0.0, 1)) + profile.gamma
    if not slope > 0:
        raise GeometryError("eta'(0) + gamma must be positive")
    omega1, omega2 = profile.omega1, profile.omega2
    omega = omega1 + omega2
    check_angle(omega, problem_kind)
    delta = profile.patch_radius
    xs = np.linspace(0.0, delta, 401)
    s = max(profile.gamma, float(np.max(np.abs(profile.eta(xs, 1)))))
    x_delta = 0.45 * delta / np.sqrt(1.0 + s * s)
    if x_max is None:
        x_max = x_delta + 10.0
    check_depth(profile, max(profile.x0, 4.0 * delta))
    xp = np.linspace(0.0, 2.0 * delta, 801)
    if np.any(profile.eta_bar(xp, 1) <= 0):
        raise GeometryError("eta'(x) + gamma <= 0 on the corner patch")
    return DomainInfo(profile, omega1, omega2, omega, delta, float(x_delta), float(x_max),
                      problem_kind)


# ---------------------------------------------------------------------------
# maps


def _check_s_patch(xt, zt, profile, tol=1e-12):
    inside = (zt >= -tol) & (zt <= xt + tol) & (np.hypot(xt, zt) <= profile.s_patch_radius + tol)
    if not np.all(inside):
        raise DomainError("point outside the straightened patch S")


def map_TS(points, profile: SurfaceProfile, strict: bool = False):
    xt, zt = _xz(points)
    if strict:
        _check_s_patch(xt, zt, profile)
    xb = xt + profile.eta_bar_inv(zt) - zt
    return _stack(xb, zt - profile.gamma * xb)


def map_TS_inv(points, profile: SurfaceProfile, strict: bool = False):
    xb, zb = _xz(points)
    zt = profile.gamma * xb + zb
    xt = xb - profile.eta_bar_inv(zt) + zt
    if strict:
        _check_s_patch(xt, zt, profile)
    return _stack(xt, zt)


def jacobian_TS(points, profile: SurfaceProfile):
    _, zt = _xz(points)
    k = 1.0 / profile.eta_bar(profile.eta_bar_inv(zt), 1) - 1.0
    g = profile.gamma
    return _mat(np.ones_like(k), k, np.full(k.shape, -g), 1.0 - g * k)


def map_T0(points, profile: SurfaceProfile, P0=None):
    P0 = profile.P0 if P0 is None else P0
    return np.asarray(points, dtype=float) @ P0


def map_T0_inv(points, profile: SurfaceProfile, P0=None):
    P0 = profile.P0 if P0 is None else P0
    return np.asarray(points, dtype=float) @ np.linalg.inv(P0)


def map_Tc(points, profile: SurfaceProfile):
    return map_TS(map_T0(points, profile), profile)


def map_Tc_inv(points, profile: SurfaceProfile):
    return map_T0_inv(map_TS_inv(points, profile), profile)


def jacobian_Tc(points, profile: SurfaceProfile):
    return jacobian_TS(map_T0(points, profile), profile) @ profile.P0.T


def map_TR(points, profile: SurfaceProfile):
    x, z = _xz(points)
    return _stack(x, profile.eta(x) * z + profile.bottom(x) * (1.0 - z))


def map_TR_inv(points, profile: SurfaceProfile):
    xb, zb = _xz(points)
    depth = profile.depth(xb)
    if np.any(depth <= 0):
        raise GeometryError("degenerate depth eta = l on the strip")
    return _stack(xb, (zb - profile.bottom(xb)) / depth)


def jacobian_TR(points, profile: SurfaceProfile):
    x, z = _xz(points)
    dz_dx = profile.eta(x, 1) * z + profile.bottom(x, 1) * (1.0 - z)
    return _mat(np.ones_like(x), np.zeros_like(x), dz_dx, profile.depth(x))


# ---------------------------------------------------------------------------
# coefficient fields


@dataclass
class CoefficientField:
    kind: str
    points: np.ndarray
    entries: np.ndarray  # (..., 2, 2)

    def deviation_from_identity(self) -> float:
        dev = self.entries - np.eye(2)
        return float(np.max(np.linalg.norm(dev, ord=2, axis=(-2, -1)))) if dev.size else 0.0

    def is_spd(self) -> bool:
        e = self.entries
        sym = np.allclose(e, np.swapaxes(e, -1, -2), atol=1e-12 * max(1.0, np.abs(e).max()))
        return bool(sym and np.all(np.linalg.eigvalsh(0.5 * (e + np.swapaxes(e, -1, -2))) > 0))


def p_s_matrix(points_bar, profile: SurfaceProfile):
    """P_S at Omega points: [[1 + gamma d, gamma], [d, 1]] with d = d(gamma x + z)."""
    xb, zb = _xz(points_bar)
    d = profile.d(profile.gamma * xb + zb)
    g = profile.gamma
    return _mat(1.0 + g * d, np.full(d.shape, g), d, np.ones_like(d))


def p_c_matrix(points_cone, profile: SurfaceProfile):
    """P_0^{-T} P_S^T P_S P_0^{-1}; P_S depends on gamma x + z = (X P_0)_z only."""
    Pinv = np.linalg.inv(profile.P0)
    Ps = p_s_matrix(map_Tc(points_cone, profile), profile)
    return Pinv.T @ np.swapaxes(Ps, -1, -2) @ Ps @ Pinv


def p_c_divergence(points_cone, profile: SurfaceProfile):
    """Row divergence d_j A_ij of the cone coefficient A = P_c.

    P_c depends on X only through s = gamma x + z; the derivative of Q = P_S^T
    P_S with respect to s is assembled from d'(s).
    """
    x, z = _xz(points_cone)
    s = profile.gamma * x + z
    d = profile.d(s)
    dp = profile.d_prime(s)
    g = profile.gamma
    Ps = _mat(1.0 + g * d, np.full(d.shape, g), d, np.ones_like(d))
    dPs = _mat(g * dp, np.zeros_like(dp), dp, np.zeros_like(dp))
    dQ = np.swapaxes(dPs, -1, -2) @ Ps + np.swapaxes(Ps, -1, -2) @ dPs
    Pinv = np.linalg.inv(profile.P0)
    dA = Pinv.T @ dQ @ Pinv
    # d/dx = gamma d/ds, d/dz = d/ds
    return dA[..., :, 0] * g + dA[..., :, 1]


def p_r_matrix(points_strip, profile: SurfaceProfile):
    x, z = _xz(points_strip)
    depth = profile.depth(x)
    off = -((profile.eta(x, 1) - profile.bottom(x, 1)) * z + profile.bottom(x, 1)) / depth
    Pr = _mat(np.ones_like(x), off, np.zeros_like(x), 1.0 / depth)
    return np.swapaxes(Pr, -1, -2) @ Pr


def rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return _mat(c, -s, s, c)


def p_w_matrix(points_tq, profile: SurfaceProfile, cone_coefficient=None):
    """Log-polar coefficient R(theta)^T A(X) R(theta) at (t, theta) points."""
    t, q = _xz(points_tq)
    X = _stack(np.exp(t) * np.cos(q), np.exp(t) * np.sin(q))
    A = p_c_matrix(X, profile) if cone_coefficient is None else cone_coefficient(X)
    R = rotation(q)
    return np.swapaxes(R, -1, -2) @ A @ R


def _require_spd(kind, points, entries):
    e = entries
    if not np.all(np.isfinite(e)):
        raise GeometryError(f"{kind} has non-finite samples")
    evals = np.linalg.eigvalsh(0.5 * (e + np.swapaxes(e, -1, -2)))
    bad = evals[..., 0] <= 0
    if np.any(bad):
        idx = np.unravel_index(np.argmax(bad), bad.shape)
        raise GeometryError(f"{kind} is not positive definite at {np.asarray(points)[idx]}")


def coefficient_field(kind: str, profile: SurfaceProfile, points=None, regularized=None) -> CoefficientField:
    """Sample one of the coefficient matrices on the given points.

    Kinds: P_S (Omega points), P_0, P_c (cone points), P_R (strip points),
    P_S_reg (S points), P_c_reg (cone points), P_w and P_w_reg ((t, theta)
    points), P_theta (angles).
    """
    if kind == "P_0":
        pts = np.zeros((1, 2)) if points is None else np.asarray(points, dtype=float)
        entries = np.broadcast_to(profile.P0, pts.shape[:-1] + (2, 2)).copy()
        return CoefficientField(kind, pts, entries)
    if points is None:
        raise PreconditionError(f"{kind} needs sample points")
    pts = np.asarray(points, dtype=float)
    if kind in ("P_S_reg", "P_c_reg", "P_w_reg") and regularized is None:
        raise PreconditionError(f"{kind} needs a regularized map")
    if kind == "P_S":
        entries = p_s_matrix(pts, profile)
    elif kind == "P_c":
        entries = p_c_matrix(pts, profile)
        origin = p_c_matrix(np.zeros((1, 2)), profile)[0]
        assert np.allclose(origin, np.eye(2), atol=1e-12), "P_c(X_c) must be the identity"
        _require_spd(kind, pts, entries)
    elif kind == "P_R":
        entries = p_r_matrix(pts, profile)
        _require_spd(kind, pts, entries)
    elif kind == "P_w":
        entries = p_w_matrix(pts, profile)
        _require_spd(kind, pts, entries)
    elif kind == "P_theta":
        entries = rotation(pts[..., 0] if pts.ndim and pts.shape[-1:] == (1,) else pts)
    elif kind == "P_S_reg":
        entries = regularized.p_s(pts)
    elif kind == "P_c_reg":
        entries = regularized.p_c(pts)
        _require_spd(kind, pts, entries)
    elif kind == "P_w_reg":
        entries = p_w_matrix(pts, profile, cone_coefficient=regularized.p_c)
        _require_spd(kind, pts, entries)
    else:
        raise PreconditionError(f"unknown coefficient kind {kind!r}")
    return CoefficientField(kind, pts, entries)


# ---------------------------------------------------------------------------
# regularized map


class HarmonicTraceExtension:
    """Harmonic function on S = {0 < z < x} with a prescribed trace on z = x.

    The bottom z = 0 carries a homogeneous Neumann condition.  S is a wedge of
    opening pi/4, so the extension is written as a contour integral of the
    mixed pencil solution with boundary data only; no outer truncation is
    needed because the trace has compact support and the integral decays.
    """

    half = np.pi / 8.0

    def __init__(self, trace, support: float, c: float = 0.5, period: float = 64.0,
                 tau_max: float = 400.0, t_lo: float = -80.0, slope0: float | None = None):
        from .mellin_wedge import folded_transform

        self.c = c
        self.slope0 = slope0
        n_period = int(2 ** np.ceil(np.log2(period * 2.0 * tau_max / np.pi)))
        dt = period / n_period
        self.dtau = 2 * np.pi / period
        n_tau = int(np.ceil(tau_max / self.dtau)) + 1
        t_hi = np.log(np.sqrt(2.0) * support) + 4 * dt
        n = int(np.ceil((t_hi - t_lo) / dt)) + 1
        t = t_lo + dt * np.arange(n)
        samples = trace(np.exp(t) / np.sqrt(2.0))
        tau, ahat = folded_transform(samples, t_lo, dt, -c, n_period, n_tau)
        self.lams = c + 1j * tau
        self.ahat = ahat
        self.tau_max = float(tau[-1])

    def _sum(self, points, derivatives: bool):
        from .mellin_wedge import scaled_cos, scaled_sin

        x, z = _xz(points)
        shape = x.shape
        x = x.ravel()
        z = z.ravel()
        r = np.hypot(x, z)
        at0 = r == 0
        rr = np.where(at0, 1.0, r)
        t = np.log(rr)
        q = np.arctan2(z, x)
        val = np.zeros(x.shape)
        gx = np.zeros(x.shape)
        gz = np.zeros(x.shape)
        om = 2 * self.half
        lam = self.lams
        wts = np.full(len(lam), 2.0)
        wts[0] = 1.0
        coef = self.ahat * wts * self.dtau / (2 * np.pi)
        chunk = 512
        for start in range(0, len(x), chunk):
            sl = slice(start, start + chunk)
            xq = q[sl][:, None]  # distance from the Neumann edge
            aim = np.abs(lam.imag)[None, :]
            L = lam[None, :]
            denom = scaled_cos(L, om)
            e = np.exp(aim * (xq - om))
            cos_part = scaled_cos(L, xq) * e / denom
            expo = np.exp(L * t[sl][:, None])
            term = coef[None, :] * expo
            val[sl] = np.real(np.sum(term * cos_part, axis=1))
            if derivatives:
                st = np.real(np.sum(term * L * cos_part, axis=1))
                sq = np.real(np.sum(term * (-L) * scaled_sin(L, xq) * e / denom, axis=1))
                cq, sn = np.cos(q[sl]), np.sin(q[sl])
                inv_r = 1.0 / rr[sl]
                gx[sl] = inv_r * (cq * st - sn * sq)
                gz[sl] = inv_r * (sn * st + cq * sq)
        val[at0] = 0.0
        if self.slope0 is not None:
            gx[at0] = 1.0 / self.slope0
            gz[at0] = 0.0
        return val.reshape(shape), gx.reshape(shape), gz.reshape(shape)

    def __call__(self, points):
        return self._sum(points, False)[0]

    def gradient(self, points):
        _, gx, gz = self._sum(points, True)
        return np.stack([gx, gz], axis=-1)


@dataclass
class RegularizedMap:
    """Regularizing diffeomorphism of the straightened patch and its cone version."""

    profile: SurfaceProfile
    epsilon: float
    extension: HarmonicTraceExtension
    p0_tilde: np.ndarray = field(init=False)

    def __post_init__(self):
        if not (0.0 <= self.epsilon <= 1.0):
            raise RegularizationError("epsilon must lie in [0, 1]")
        self.p0_tilde = self.p_s(np.zeros((1, 2)))[0]

    def _shifted(self, points):
        xt, zt = _xz(points)
        e = self.epsilon
        return _stack(e * xt + (1.0 - e) * zt, zt)

    def forward(self, points):
        xt, zt = _xz(points)
        sig = self.extension(self._shifted(points))
        xb = xt + sig - zt
        return _stack(xb, zt - self.profile.gamma * xb)

    def jacobian(self, points):
        g = self.extension.gradient(self._shifted(points))
        sx, sz = g[..., 0], g[..., 1]
        e = self.epsilon
        a = 1.0 + e * sx
        bz = (1.0 - e) * sx + sz - 1.0
        gam = self.profile.gamma
        return _mat(a, bz, -gam * a, 1.0 - gam * bz)

    def det(self, points):
        g = self.extension.gradient(self._shifted(points))
        return 1.0 + self.epsilon * g[..., 0]

    def p_s(self, points):
        return np.swapaxes(np.linalg.inv(self.jacobian(points)), -1, -2)

    def inverse(self, points, tol: float = 1e-14, max_iter: int = 50):
        target = np.asarray(points, dtype=float)
        X = map_TS_inv(target, self.profile)
        for _ in range(max_iter):
            res = self.forward(X) - target
            step = np.linalg.solve(self.jacobian(X), res[..., None])[..., 0]
            X = X - step
            if np.max(np.abs(step)) <= tol * max(1.0, float(np.max(np.abs(X)))):
                break
        return X

    # cone versions use the regularized linear part so that D T(0) = Id
    def to_s(self, points):
        return np.asarray(points, dtype=float) @ self.p0_tilde

    def forward_cone(self, points):
        return self.forward(self.to_s(points))

    def inverse_cone(self, points):
        return self.inverse(points) @ np.linalg.inv(self.p0_tilde)

    def jacobian_cone(self, points):
        return self.jacobian(self.to_s(points)) @ self.p0_tilde.T

    def det_cone(self, points):
        return self.det(self.to_s(points)) * float(np.linalg.det(self.p0_tilde))

    def p_c(self, points):
        Pinv = np.linalg.inv(self.p0_tilde)
        Ps = self.p_s(self.to_s(points))
        return Pinv.T @ np.swapaxes(Ps, -1, -2) @ Ps @ Pinv

    def operator_coefficient(self, points):
        """J P~_c: the matrix of the divergence-form operator on the cone."""
        return self.det_cone(points)[..., None, None] * self.p_c(points)


def _trace_cutoff(profile: SurfaceProfile, cutoff: float):
    def trace(x):
        x = np.asarray(x, dtype=float)
        beta = smoothstep((cutoff - x) / (0.5 * cutoff))
        out = np.zeros(x.shape)
        live = beta > 0
        out[live] = beta[live] * profile.eta_bar_inv(x[live])
        return out
    return trace


def sup_dx_extension(extension: HarmonicTraceExtension, radius: float, n_r: int = 60, n_q: int = 9):
    r = radius * np.geomspace(1e-4, 1.0, n_r)
    q = np.linspace(0.0, np.pi / 4, n_q)
    R, Q = np.meshgrid(r, q, indexing="ij")
    pts = _stack(R * np.cos(Q), R * np.sin(Q))
    return float(np.max(np.abs(extension.gradient(pts)[..., 0])))


def build_regularized_map(profile: SurfaceProfile, cutoff: float | None = None,
                          epsilon_cap: float = 0.25, epsilon: float | None = None):
    """Return (TransformBundle of T_S_reg, CoefficientField factory data, P~_0).

    ``cutoff`` is the support radius of the trace cutoff (default: the patch
    radius).  When ``epsilon`` is omitted the largest admissible value
    min(epsilon_cap, 1/(2 sup |d_x s~|)) is used.
    """
    cutoff = profile.patch_radius if cutoff is None else float(cutoff)
    ext = HarmonicTraceExtension(_trace_cutoff(profile, cutoff), cutoff,
                                 slope0=float(profile.eta_bar(0.0, 1)))
    sup = sup_dx_extension(ext, np.sqrt(2.0) * 2.0 * cutoff)
    bound = 1.0 / (2.0 * sup) if sup > 0 else np.inf
    if epsilon is None:
        epsilon = min(epsilon_cap, bound)
    elif epsilon > min(epsilon_cap, bound) * (1 + 1e-12):
        raise RegularizationError(
            f"epsilon={epsilon:.4g} exceeds min(cap, 1/(2 sup|d_x s|)) = {min(epsilon_cap, bound):.4g}")
    reg = RegularizedMap(profile, float(epsilon), ext)
    bundle = TransformBundle("T_S_reg", profile, float(epsilon), reg)
    field_ = coefficient_field("P_S_reg", profile, np.zeros((1, 2)), regularized=reg)
    return bundle, field_, reg.p0_tilde


# ---------------------------------------------------------------------------
# bundles


@dataclass
class TransformBundle:
    kind: str
    profile: SurfaceProfile
    epsilon: float = 0.0
    s_field: RegularizedMap | None = None

    _KINDS = ("T_S", "T_S_inv", "T_0", "T_c", "T_R", "T_R_inv", "T_S_reg", "T_c_reg")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise PreconditionError(f"unknown transform kind {self.kind!r}")
        if self.kind.endswith("_reg") and self.s_field is None:
            raise PreconditionError("regularized transforms need the extension s~")

    def forward(self, points):
        p = self.profile
        return {
            "T_S": lambda: map_TS(points, p),
            "T_S_inv": lambda: map_TS_inv(points, p),
            "T_0": lambda: map_T0(points, p),
            "T_c": lambda: map_Tc(points, p),
            "T_R": lambda: map_TR(points, p),
            "T_R_inv": lambda: map_TR_inv(points, p),
            "T_S_reg": lambda: self.s_field.forward(points),
            "T_c_reg": lambda: self.s_field.forward_cone(points),
        }[self.kind]()

    def inverse(self, points):
        p = self.profile
        return {
            "T_S": lambda: map_TS_inv(points, p),
            "T_S_inv": lambda: map_TS(points, p),
            "T_0": lambda: map_T0_inv(points, p),
            "T_c": lambda: map_Tc_inv(points, p),
            "T_R": lambda: map_TR_inv(points, p),
            "T_R_inv": lambda: map_TR(points, p),
            "T_S_reg": lambda: self.s_field.inverse(points),
            "T_c_reg": lambda: self.s_field.inverse_cone(points),
        }[self.kind]()

    def jacobian(self, points):
        p = self.profile
        if self.kind == "T_S":
            return jacobian_TS(points, p)
        if self.kind == "T_0":
            return np.broadcast_to(p.P0.T, np.shape(points)[:-1] + (2, 2))
        if self.kind == "T_c":
            return jacobian_Tc(points, p)
        if self.kind == "T_R":
            return jacobian_TR(points, p)
        if self.kind == "T_S_reg":
            return self.s_field.jacobian(points)
        if self.kind == "T_c_reg":
            return self.s_field.jacobian_cone(points)
        return np.linalg.inv(TransformBundle(self.kind[:-4], p).jacobian(self.forward(points)))
