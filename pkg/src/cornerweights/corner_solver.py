"""Model wedge problem solved by Laplace transform in t = ln r.

For data (h, f, g) on the infinite wedge {-omega2 < theta < omega1} the
function w(t, theta) = v(e^t, theta) satisfies

    w_tt + w_thth = e^{2t} h,
    top:    w = f            (Dirichlet)   or  w_th = e^t f     (Neumann),
    bottom: w = g            (Dirichlet)   or -w_th = e^t g     (Neumann),

with Neumann data given as outward normal derivatives.  On the line
Re lam = -beta_contour the transform of w solves the angular pencil; the
inverse transform is a trapezoid sum over a uniform tau grid.  Transforms of
the data are computed by folding the weighted samples onto one period and a
single FFT.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import least_squares

from .cutoffs import plateau
from .errors import FitError, PreconditionError, ToleranceError, TruncationError, WeightSelectionError
from .geometry import WedgeSpec
from .mellin_wedge import (
    EigenEntry,
    EigenSystem,
    PencilBatch,
    PencilKernel,
    chebyshev_nodes,
    eigensystem,
    folded_transform,
    half_line_inverse,
)
from .weighted_spaces import GridFunction, NormReport, cone_grid, tensor_spline, vnorm_cone

KIND_TO_BC = {"MBVP": ("dirichlet", "neumann"), "DVP": ("dirichlet", "dirichlet"),
              "NVP": ("neumann", "neumann")}


def _ray_callable(f):
    if f is None or callable(f):
        return f
    if isinstance(f, GridFunction):
        spline = CubicSpline(f.t, f.values)
        t0, t1 = f.t[0], f.t[-1]

        def fn(r):
            t = np.log(np.asarray(r, dtype=float))
            return np.where((t >= t0) & (t <= t1), spline(np.clip(t, t0, t1)), 0.0)
        return fn
    raise PreconditionError("boundary data must be a callable of r or a ray GridFunction")


def _cone_callable(h):
    if h is None or callable(h):
        return h
    if isinstance(h, GridFunction):
        interp = tensor_spline(h.t, h.theta, h.values, fill=0.0)

        def fn(r, q):
            return interp(np.log(np.asarray(r, dtype=float)), q)
        return fn
    raise PreconditionError("interior data must be a callable of (r, theta) or a cone GridFunction")


@dataclass
class WedgeProblem:
    """Data of the model problem on the infinite wedge.

    ``h`` is a callable of (r, theta) or a cone GridFunction; ``f`` and ``g``
    are callables of r or ray GridFunctions.  ``support`` bounds the radius
    outside which all data vanish.
    """

    spec: WedgeSpec
    h: Callable | GridFunction | None = None
    f: Callable | GridFunction | None = None
    g: Callable | GridFunction | None = None
    beta_source: float = 2.0
    support: float = 1.0

    def __post_init__(self):
        self.h = _cone_callable(self.h)
        self.f = _ray_callable(self.f)
        self.g = _ray_callable(self.g)
        if not self.support > 0:
            raise PreconditionError("support radius must be positive")

    @property
    def problem_kind(self) -> str:
        for kind, pair in KIND_TO_BC.items():
            if pair == self.spec.bc_pair:
                return kind
        return "mixed-reversed"

    @property
    def is_zero(self) -> bool:
        return self.h is None and self.f is None and self.g is None

    def strip_data(self):
        """Callables F(t, theta), a(t), b(t) of the transformed system."""
        top, bottom = self.spec.bc_pair
        h, f, g = self.h, self.f, self.g
        F = None if h is None else (lambda t, q: np.exp(2 * t) * h(np.exp(t), q))
        if f is None:
            a = None
        elif top == "dirichlet":
            a = lambda t: f(np.exp(t))
        else:
            a = lambda t: np.exp(t) * f(np.exp(t))
        if g is None:
            b = None
        elif bottom == "dirichlet":
            b = lambda t: g(np.exp(t))
        else:
            b = lambda t: np.exp(t) * g(np.exp(t))
        return F, a, b


def check_contour(spec: WedgeSpec, beta_contour: float, tol: float = 1e-8):
    kernel = PencilKernel(spec.bc_pair, spec.omega1, spec.omega2)
    d, ev = kernel.distance_to_spectrum(complex(-beta_contour, 0.0))
    if d < tol:
        raise WeightSelectionError(
            f"contour Re lam = {-beta_contour:g} meets the eigenvalue {ev:.12g}", eigenvalue=ev)
    return kernel


def _spectral_gaps(spec: WedgeSpec, c: float):
    eig = eigensystem(spec.bc_pair, spec.omega, range(-6, 7), spec.omega2).eigenvalues
    right = eig[eig > c]
    left = eig[eig < c]
    gap_r = (right.min() - c) if right.size else 10.0
    gap_l = (c - left.max()) if left.size else 10.0
    return gap_l, gap_r


@dataclass
class WedgeSolution:
    """Contour representation of a wedge solution.

    ``phi`` and ``dphi`` hold the angular solution and its theta derivative
    at nodes lam_j = -beta + i j dtau (j >= 0) on the output angles.
    """

    spec: WedgeSpec
    beta_contour: float
    lams: np.ndarray
    dtau: float
    theta: np.ndarray
    t: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    Fhat: np.ndarray | None
    ahat: np.ndarray
    bhat: np.ndarray
    F: Callable | None
    n_cheb: int
    meta: dict = field(default_factory=dict)

    @property
    def values(self) -> np.ndarray:
        if "_values" not in self.meta:
            self.meta["_values"] = half_line_inverse(self.lams, self.phi, self.t, self.dtau)
        return self.meta["_values"]

    def grid_function(self) -> GridFunction:
        return GridFunction("cone", (self.t, self.theta), self.values, 4,
                            {"omega1": self.spec.omega1, "omega2": self.spec.omega2})

    def _angular(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape == self.theta.shape and np.array_equal(theta, self.theta):
            return self.phi, self.dphi
        batch = PencilBatch(self.spec.bc_pair, self.spec.omega1, self.spec.omega2, theta, self.n_cheb)
        return batch.solve(self.lams, self.Fhat, self.ahat, self.bhat, derivative=True)

    def derivatives(self, t, theta) -> dict:
        """w and its t/theta derivatives up to order two on the tensor grid t x theta."""
        t = np.asarray(t, dtype=float)
        theta = np.asarray(theta, dtype=float)
        phi, dphi = self._angular(theta)
        lam = self.lams[:, None]
        out = {
            "w": half_line_inverse(self.lams, phi, t, self.dtau),
            "w_t": half_line_inverse(self.lams, lam * phi, t, self.dtau),
            "w_q": half_line_inverse(self.lams, dphi, t, self.dtau),
            "w_tt": half_line_inverse(self.lams, lam**2 * phi, t, self.dtau),
            "w_tq": half_line_inverse(self.lams, lam * dphi, t, self.dtau),
        }
        T, Q = np.meshgrid(t, theta, indexing="ij")
        Fv = np.zeros(T.shape) if self.F is None else self.F(T, Q)
        out["w_qq"] = Fv - out["w_tt"]
        return out

    def evaluate(self, t, theta) -> np.ndarray:
        return self.derivatives(t, theta)["w"]

    def cartesian_derivatives(self, t, theta) -> dict:
        """v, grad v and the Hessian of v in Cartesian coordinates on t x theta."""
        d = self.derivatives(t, theta)
        T, Q = np.meshgrid(np.asarray(t, float), np.asarray(theta, float), indexing="ij")
        e = np.exp(-T)
        c, s = np.cos(Q), np.sin(Q)
        wt, wq, wtt, wtq, wqq = d["w_t"], d["w_q"], d["w_tt"], d["w_tq"], d["w_qq"]
        vx = e * (c * wt - s * wq)
        vz = e * (s * wt + c * wq)
        # second derivatives from d_x = e^{-t}(c d_t - s d_q), d_z = e^{-t}(s d_t + c d_q)
        e2 = e * e
        vxx = e2 * (c * c * (wtt - wt) + s * s * (wqq + wt) - 2 * c * s * (wtq - wq))
        vzz = e2 * (s * s * (wtt - wt) + c * c * (wqq + wt) + 2 * c * s * (wtq - wq))
        vxz = e2 * (c * s * (wtt - wt - wqq - wt) + (c * c - s * s) * (wtq - wq))
        return {"v": d["w"], "vx": vx, "vz": vz, "vxx": vxx, "vxz": vxz, "vzz": vzz}

    def residual_at(self, t, theta, h: float = 1e-3) -> np.ndarray:
        """Finite-difference PDE residual of the spectral solution at a few points."""
        t = np.asarray(t, dtype=float)
        theta = np.asarray(theta, dtype=float)
        tt = np.concatenate([t - h, t, t + h])
        qq = np.concatenate([theta - h, theta, theta + h])
        W = self.evaluate(tt, qq)
        n, m = len(t), len(theta)
        c = W[n:2 * n, m:2 * m]
        lap = (W[:n, m:2 * m] + W[2 * n:, m:2 * m] + W[n:2 * n, :m] + W[n:2 * n, 2 * m:] - 4 * c) / h**2
        T, Q = np.meshgrid(t, theta, indexing="ij")
        Fv = np.zeros(T.shape) if self.F is None else self.F(T, Q)
        return lap - Fv


def _sample_signal(fn, t):
    return np.zeros(t.shape) if fn is None else np.asarray(fn(t), dtype=float)


def solve_wedge(problem: WedgeProblem, beta_contour: float, n_t: int = 256, n_theta: int = 64,
                t_min: float = -8.0, t_max: float = 0.0, tau_max: float | None = None,
                tail_tol: float = 1e-8, n_cheb: int = 48, tau_cap: float = 4096.0,
                verify: bool = False) -> WedgeSolution:
    """Reconstruct the solution on the line Re lam = -beta_contour.

    The output grid has n_t points in t on [t_min, t_max] and n_theta + 1
    angles including both edges.  ``tau_max`` is doubled until the spectral
    tail falls below ``tail_tol`` (unless it is given explicitly).
    """
    spec = problem.spec
    check_contour(spec, beta_contour)
    c = -float(beta_contour)
    theta = np.linspace(-spec.omega2, spec.omega1, n_theta + 1)
    t_out = np.linspace(t_min, t_max, n_t)
    F, a, b = problem.strip_data()
    t_hi = np.log(problem.support) + 0.05

    # how far the data must be integrated towards the corner
    cheb = chebyshev_nodes(-spec.omega2, spec.omega1, n_cheb)

    def weighted_edge(t_lo):
        tt = np.array([t_lo, t_lo + 0.5])
        vals = [np.abs(_sample_signal(a, tt)), np.abs(_sample_signal(b, tt))]
        if F is not None:
            T, Q = np.meshgrid(tt, cheb, indexing="ij")
            vals.append(np.abs(F(T, Q)).max(axis=1))
        return np.exp(-c * tt[0]) * max(float(np.max(v)) for v in vals)

    tt = np.linspace(min(t_min, t_hi - 40.0), t_hi, 2001)
    scale = 0.0
    for fn in (a, b):
        if fn is not None:
            scale = max(scale, float(np.max(np.abs(np.exp(-c * tt) * fn(tt)))))
    if F is not None:
        T, Q = np.meshgrid(tt, cheb, indexing="ij")
        scale = max(scale, float(np.max(np.abs(np.exp(-c * T) * F(T, Q)))))
    zero_data = scale == 0.0
    t_lo = min(t_min, t_hi - 40.0)
    while not zero_data and weighted_edge(t_lo) > 1e-15 * scale:
        t_lo -= 40.0
        if t_lo < -2000:
            raise TruncationError("weighted data do not decay towards the corner on this contour")

    gap_l, gap_r = _spectral_gaps(spec, c)
    kappa = max(min(gap_l, gap_r, 1.0), 0.1)
    period = (t_hi - t_min) + 36.0 / kappa
    dtau = 2 * np.pi / period

    def run(tmax_tau):
        n_period = int(2 ** np.ceil(np.log2(period * 2.0 * tmax_tau / np.pi)))
        dt = period / n_period
        n_tau = int(np.ceil(tmax_tau / dtau)) + 1
        n_s = int(np.ceil((t_hi - t_lo) / dt)) + 1
        ts = t_lo + dt * np.arange(n_s)
        _, ahat = folded_transform(_sample_signal(a, ts), t_lo, dt, -c, n_period, n_tau)
        tau, bhat = folded_transform(_sample_signal(b, ts), t_lo, dt, -c, n_period, n_tau)
        if F is not None:
            T, Q = np.meshgrid(ts, cheb, indexing="ij")
            _, Fhat = folded_transform(F(T, Q), t_lo, dt, -c, n_period, n_tau)
        else:
            Fhat = None
        lams = c + 1j * tau
        batch = PencilBatch(spec.bc_pair, spec.omega1, spec.omega2, theta, n_cheb)
        phi, dphi = batch.solve(lams, Fhat, ahat, bhat, derivative=True)
        return lams, phi, dphi, Fhat, ahat, bhat

    def tail(lams, phi):
        size = np.sqrt(np.mean(np.abs(phi) ** 2, axis=1)) * (1 + np.abs(lams))
        top = size.max()
        if top == 0:
            return 0.0
        k = max(1, len(size) // 20)
        return float(size[-k:].max() / top)

    if zero_data:
        cur = 8.0
    elif tau_max is not None:
        cur = float(tau_max)
    else:
        cur = 64.0
    while True:
        lams, phi, dphi, Fhat, ahat, bhat = run(cur)
        tl = tail(lams, phi)
        if tau_max is not None or zero_data or tl < tail_tol:
            break
        if cur >= tau_cap:
            raise TruncationError(f"spectral tail {tl:.2e} above {tail_tol:.0e} at tau_max = {cur:g}")
        cur *= 2.0
    sol = WedgeSolution(spec, float(beta_contour), lams, dtau, theta, t_out, phi, dphi,
                        Fhat, ahat, bhat, F, n_cheb,
                        {"tau_max": cur, "tail": tl, "period": period, "t_lo": t_lo})
    bc = boundary_residual(sol, problem)
    sol.meta["boundary_residual"] = bc
    if verify and bc > 1e-6:
        raise ToleranceError(f"boundary residual {bc:.2e} exceeds 1e-6")
    return sol


def boundary_residual(sol: WedgeSolution, problem: WedgeProblem) -> float:
    """Relative mismatch of the boundary conditions on the output grid."""
    _, a, b = problem.strip_data()
    t = sol.t
    top, bottom = sol.spec.bc_pair
    w = sol.values
    dq = half_line_inverse(sol.lams, sol.dphi, t, sol.dtau)
    got_top = w[:, -1] if top == "dirichlet" else dq[:, -1]
    got_bot = w[:, 0] if bottom == "dirichlet" else -dq[:, 0]
    want_top = _sample_signal(a, t)
    want_bot = _sample_signal(b, t)
    scale = max(1e-300, float(np.max(np.abs(w))), float(np.max(np.abs(want_top))),
                float(np.max(np.abs(want_bot))))
    err = max(float(np.max(np.abs(got_top - want_top))), float(np.max(np.abs(got_bot - want_bot))))
    return err / scale if scale > 1e-300 else 0.0


# ---------------------------------------------------------------------------
# contour shift


@dataclass
class CrossedEigenvalue:
    m: int
    lam: float
    residue: float


@dataclass
class ShiftResult:
    solution_to: WedgeSolution
    solution_from: WedgeSolution
    crossed: list
    sup_difference: float


def angular_projection(values: np.ndarray, theta: np.ndarray, entry: EigenEntry) -> np.ndarray:
    from scipy.integrate import simpson

    phi = entry.eigenfunction(theta)
    return simpson(values * phi[None, :], x=theta, axis=1) / simpson(phi**2, x=theta)


def shift_contour(problem: WedgeProblem, beta_from: float, beta_to: float, r_window=None,
                  **solve_kw) -> ShiftResult:
    """Solve on two contours and report the eigenvalues strictly between them.

    Residues are normalised so that w(left line) - w(right line) equals
    sum_m c_m r^{lam_m} phi_m, with phi_m the eigenfunction of the entry.
    """
    spec = problem.spec
    sol_from = solve_wedge(problem, beta_from, **solve_kw)
    sol_to = solve_wedge(problem, beta_to, **solve_kw)
    c_from, c_to = -beta_from, -beta_to
    lo, hi = min(c_from, c_to), max(c_from, c_to)
    eig = eigensystem(spec.bc_pair, spec.omega, range(-12, 13), spec.omega2)
    crossed_entries = [e for e in eig.entries if lo < e.lam < hi]
    diff = sol_to.values - sol_from.values
    t = sol_from.t
    if r_window is None:
        r_window = (np.exp(-6.0), problem.support)
    mask = (np.exp(t) >= r_window[0]) & (np.exp(t) <= r_window[1])
    sup = float(np.max(np.abs(diff[mask]))) if np.any(mask) else 0.0
    left_minus_right = -diff if c_to > c_from else diff
    crossed = []
    for e in crossed_entries:
        p = angular_projection(left_minus_right, sol_from.theta, e)
        basis = np.exp(e.lam * t)
        sel = mask if np.any(mask) else slice(None)
        coef = float(np.dot(p[sel], basis[sel]) / np.dot(basis[sel], basis[sel]))
        crossed.append(CrossedEigenvalue(e.m, e.lam, coef))
    return ShiftResult(sol_to, sol_from, crossed, sup)


# ---------------------------------------------------------------------------
# singular exponents


@dataclass
class SingularTerm:
    m: int
    lam: float
    lam_hat: float
    c_hat: float
    entry: EigenEntry


@dataclass
class SingularDecomposition:
    terms: list
    regular_remainder_norm: NormReport
    fit_window: tuple
    stable: bool = True
    shifted_c: list = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["m", "lambda_hat", "c_hat", "fit_r_lo", "fit_r_hi", "remainder_norm"])
        for term in self.terms:
            wr.writerow([term.m, f"{term.lam_hat:.10g}", f"{term.c_hat:.10g}",
                         f"{self.fit_window[0]:.10g}", f"{self.fit_window[1]:.10g}",
                         f"{self.regular_remainder_norm.value:.10g}"])
        return buf.getvalue()


def _fit_power(r, p, lam0):
    """Fit p ~ c r^lam (+ d r^{lam + kappa} when that explains clearly more)."""
    logr = np.log(r)
    A = np.vstack([logr, np.ones_like(logr)]).T
    sign = np.sign(np.median(p))
    slope, icpt = np.linalg.lstsq(A, np.log(np.abs(p)), rcond=None)[0]
    res1 = least_squares(lambda x: (x[0] * r ** x[1] - p) / np.abs(p), [sign * np.exp(icpt), slope])
    best = res1
    cost1 = res1.cost
    for kappa0 in (0.25, 0.5, 1.0, 1.5):
        def resid(x):
            return (x[0] * r ** x[1] + x[2] * r ** (x[1] + x[3]) - p) / np.abs(p)
        try:
            res2 = least_squares(resid, [res1.x[0], lam0, 0.0, kappa0],
                                 bounds=([-np.inf, lam0 - 1, -np.inf, 0.05], [np.inf, lam0 + 1, np.inf, 4.0]))
        except ValueError:
            continue
        if res2.cost < 1e-2 * cost1 and res2.cost < best.cost:
            best = res2
    return float(best.x[1]), float(best.x[0])


def fit_singular_exponents(v, eigen: EigenSystem, n_terms: int = 1, delta: float | None = None,
                           k_range=(1, 6)) -> SingularDecomposition:
    """Project onto angular eigenfunctions and fit radial powers on dyadic annuli.

    ``v`` is a cone GridFunction or a WedgeSolution.  The window is
    r in [2^{-k_max-1} delta, 2^{-k_min} delta].  A refit on the window
    shifted by one annulus decides the ``stable`` flag (5% gate on c).
    """
    gf = v.grid_function() if isinstance(v, WedgeSolution) else v
    t, theta = gf.t, gf.theta
    if delta is None:
        delta = float(np.exp(t[-1]))
    r = np.exp(t)
    candidates = [e for e in eigen.entries if e.lam >= 0]
    candidates.sort(key=lambda e: e.lam)
    scale = float(np.max(np.abs(gf.values)))

    def window(k_lo, k_hi):
        return (r >= 2.0 ** (-k_hi - 1) * delta) & (r <= 2.0 ** (-k_lo) * delta)

    k_lo, k_hi = k_range
    win = window(k_lo, k_hi)
    fit_window = (2.0 ** (-k_hi - 1) * delta, 2.0 ** (-k_lo) * delta)
    if r[0] > fit_window[0] * 1.0001:
        raise FitError("grid does not resolve the fit window")
    terms, shifted, stable = [], [], True
    remainder = gf.values.copy()
    if scale > 0:
        for e in candidates:
            if len(terms) >= n_terms:
                break
            p = angular_projection(remainder, theta, e)
            informative = 0
            for k in range(k_lo, k_hi + 1):
                m = window(k, k)
                if np.any(m) and np.max(np.abs(p[m])) > 1e-10 * scale:
                    informative += 1
            if informative == 0:
                continue
            if informative < 3:
                raise FitError("fewer than three informative annuli")
            sel = win & (np.abs(p) > 1e-12 * scale)
            lam_hat, c_hat = _fit_power(r[sel], p[sel], e.lam)
            sel2 = window(k_lo + 1, k_hi + 1) & (np.abs(p) > 1e-12 * scale)
            if np.count_nonzero(sel2) >= 3:
                _, c_shift = _fit_power(r[sel2], p[sel2], e.lam)
                shifted.append(c_shift)
                if abs(c_shift - c_hat) > 0.05 * abs(c_hat):
                    stable = False
            mags = [np.sqrt(np.mean(p[window(k, k)] ** 2)) for k in range(k_lo, k_hi + 1)]
            if not (np.all(np.diff(mags) <= 0) or np.all(np.diff(mags) >= 0)):
                stable = False
            terms.append(SingularTerm(e.m, e.lam, lam_hat, c_hat, e))
            remainder = remainder - c_hat * r[:, None] ** lam_hat * e.eigenfunction(theta)[None, :]
    rem = GridFunction("cone", (t, theta), np.where(win[:, None], remainder, 0.0), gf.stencil_order, gf.meta)
    rem_norm = vnorm_cone(rem, 0, 0.0)
    return SingularDecomposition(terms, rem_norm, fit_window, stable, shifted)


def singular_function(entry: EigenEntry, radial_cutoff=None, omega1: float | None = None,
                      omega2: float | None = None, n_t: int = 256, n_theta: int = 65,
                      t_min: float = -8.0, t_max: float = 0.0) -> GridFunction:
    """S_m = r^lam phi_m(theta) cutoff(r) on the cone chart.

    ``radial_cutoff`` is a callable of r or an (inner, outer) pair for the
    quintic plateau; None means no cutoff.
    """
    if omega2 is None:
        omega2 = entry.omega2
    if omega1 is None:
        raise PreconditionError("omega1 is required")
    if radial_cutoff is None:
        cut = lambda r: np.ones_like(r)
    elif callable(radial_cutoff):
        cut = radial_cutoff
    else:
        inner, outer = radial_cutoff
        cut = lambda r: plateau(r, inner, outer)
    t, q = cone_grid(omega1, omega2, n_t, n_theta, t_min, t_max)
    T, Q = np.meshgrid(t, q, indexing="ij")
    R = np.exp(T)
    vals = R**entry.lam * entry.eigenfunction(Q) * cut(R)
    return GridFunction("cone", (t, q), vals, 4, {"omega1": omega1, "omega2": omega2})
