"""Laplace transform in t = ln r and the angular operator pencil.

After the change of variables r = e^t the Laplacian on a wedge
I = [-omega2, omega1] becomes d_t^2 + d_theta^2, and the Laplace transform
in t turns it into the angular boundary value problem

    phi'' + lam^2 phi = F   on I,
    B_top phi(omega1) = a,  B_bot phi(-omega2) = b,

where B_top is the trace (Dirichlet) or d_theta (Neumann) and B_bot is the
trace (Dirichlet) or -d_theta (Neumann, outward).  The solution is written
with the Green's function built from the two homogeneous solutions that
satisfy the bottom and the top condition respectively.  All trigonometric
factors are evaluated in scaled form so that |Im lam| * omega of several
hundred does not overflow.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import brentq

from .errors import (
    DataError,
    NearSpectrumError,
    PreconditionError,
    TruncationError,
)

DIRICHLET = "dirichlet"
NEUMANN = "neumann"

_ALIASES = {
    "mixed": (DIRICHLET, NEUMANN),
    "mbvp": (DIRICHLET, NEUMANN),
    "dirichlet": (DIRICHLET, DIRICHLET),
    "dvp": (DIRICHLET, DIRICHLET),
    "neumann": (NEUMANN, NEUMANN),
    "nvp": (NEUMANN, NEUMANN),
}

NEAR_SPECTRUM_TOL = 1e-8


def normalize_bc_pair(bc) -> tuple[str, str]:
    """Return (top, bottom) boundary-condition kinds."""
    if isinstance(bc, str):
        key = bc.strip().lower()
        if key not in _ALIASES:
            raise PreconditionError(f"unknown boundary-condition pair {bc!r}")
        return _ALIASES[key]
    top, bottom = bc
    top, bottom = str(top).lower(), str(bottom).lower()
    for side in (top, bottom):
        if side not in (DIRICHLET, NEUMANN):
            raise PreconditionError(f"unknown boundary condition {side!r}")
    return top, bottom


def bc_label(bc) -> str:
    top, bottom = normalize_bc_pair(bc)
    if top != bottom:
        return "mixed" if top == DIRICHLET else "mixed-reversed"
    return top


# ---------------------------------------------------------------------------
# scaled trigonometry: f(lam * x) = mantissa * exp(|Im lam| * x), x >= 0


def _scaled_exp_pair(lam, x):
    a = np.abs(lam.imag)
    ep = np.exp(1j * lam * x - a * x)
    em = np.exp(-1j * lam * x - a * x)
    return ep, em


def scaled_cos(lam, x):
    ep, em = _scaled_exp_pair(lam, x)
    return 0.5 * (ep + em)


def scaled_sin(lam, x):
    ep, em = _scaled_exp_pair(lam, x)
    return (ep - em) / 2j


def scaled_sinc(lam, x):
    """Mantissa of sin(lam x)/lam, continuous through lam = 0."""
    lam = np.asarray(lam, dtype=complex)
    x = np.asarray(x, dtype=float)
    lam_b, x_b = np.broadcast_arrays(lam, x)
    out = np.empty(lam_b.shape, dtype=complex)
    small = np.abs(lam_b * x_b) < 1e-4
    big = ~small
    if np.any(big):
        out[big] = scaled_sin(lam_b[big], x_b[big]) / lam_b[big]
    if np.any(small):
        lx = lam_b[small] * x_b[small]
        a = np.abs(lam_b[small].imag) * x_b[small]
        out[small] = x_b[small] * (1 - lx**2 / 6 + lx**4 / 120) * np.exp(-a)
    return out


class PencilKernel:
    """Homogeneous solutions, Wronskian and Green's function of the pencil.

    The lower solution u1 satisfies the bottom condition, the upper solution
    u2 the top condition.  Every function is returned as a mantissa; the
    true value is mantissa * exp(|Im lam| * x) with x the distance to the
    edge at which the solution is normalized.
    """

    def __init__(self, bc_pair, omega1: float, omega2: float):
        self.top, self.bottom = normalize_bc_pair(bc_pair)
        self.omega1 = float(omega1)
        self.omega2 = float(omega2)
        self.omega = self.omega1 + self.omega2
        if not (self.omega > 0):
            raise PreconditionError("degenerate angular interval")

    # lower solution, x1 = theta + omega2
    def u1(self, lam, theta):
        x1 = np.asarray(theta) + self.omega2
        if self.bottom == NEUMANN:
            return scaled_cos(lam, x1), -lam * scaled_sin(lam, x1)
        return scaled_sinc(lam, x1), scaled_cos(lam, x1)

    # upper solution, x2 = omega1 - theta
    def u2(self, lam, theta):
        x2 = self.omega1 - np.asarray(theta)
        if self.top == DIRICHLET:
            return scaled_sinc(lam, x2), -scaled_cos(lam, x2)
        return scaled_cos(lam, x2), lam * scaled_sin(lam, x2)

    def wronskian(self, lam):
        """Mantissa of W = u1 u2' - u1' u2 (true value has exp(|Im| omega))."""
        lam = np.asarray(lam, dtype=complex)
        v, dv = self.u1(lam, np.full(lam.shape, self.omega1))
        return -v if self.top == DIRICHLET else -dv

    def determinant(self, lam):
        """Unscaled characteristic function whose zeros are the eigenvalues."""
        lam = np.asarray(lam, dtype=complex)
        w = self.wronskian(lam) * np.exp(np.abs(lam.imag) * self.omega)
        return w

    def eigenvalues(self, m_range: Sequence[int]) -> np.ndarray:
        return np.array([eigenvalue_formula((self.top, self.bottom), self.omega, m) for m in m_range
                         if eigenvalue_formula((self.top, self.bottom), self.omega, m) is not None])

    def distance_to_spectrum(self, lam) -> tuple[float, float]:
        lam = complex(lam)
        step = np.pi / self.omega
        shift = 0.5 if self.top != self.bottom else 0.0
        m = np.round(lam.real / step - shift)
        best = None
        for mm in (m - 1, m, m + 1):
            val = (mm + shift) * step
            if self.top == DIRICHLET and self.bottom == DIRICHLET and mm == 0:
                continue
            d = abs(lam - val)
            if best is None or d < best[0]:
                best = (d, val)
        return best

    def guard(self, lam):
        lam_arr = np.atleast_1d(np.asarray(lam, dtype=complex))
        for value in lam_arr:
            d, ev = self.distance_to_spectrum(value)
            if d < NEAR_SPECTRUM_TOL:
                raise NearSpectrumError(
                    f"lambda={value} lies within {d:.3e} of the eigenvalue {ev:.12g}",
                    eigenvalue=ev, distance=d)


def eigenvalue_formula(bc_pair, omega: float, m: int):
    top, bottom = normalize_bc_pair(bc_pair)
    if top != bottom:
        return (m + 0.5) * np.pi / omega
    if top == DIRICHLET and m == 0:
        return None
    return m * np.pi / omega


# ---------------------------------------------------------------------------
# single-lambda solve


def _gl_on(a, b, nodes, weights):
    half = 0.5 * (b - a)
    return a[..., None] + half[..., None] * (nodes + 1.0), half[..., None] * weights


@dataclass
class AngularSolution:
    """Solution of one pencil problem, evaluable anywhere on I."""

    lam: complex
    kernel: PencilKernel
    F: Callable | None
    a: complex
    b: complex
    n_gl: int = 64

    def _integrals(self, theta):
        theta = np.asarray(theta, dtype=float)
        k = self.kernel
        lam = complex(self.lam)
        if self.F is None:
            z = np.zeros(theta.shape, dtype=complex)
            return z, z
        x, w = leggauss(self.n_gl)
        lo = np.full(theta.shape, -k.omega2)
        hi = np.full(theta.shape, k.omega1)
        s_lo, w_lo = _gl_on(lo, theta, x, w)
        s_hi, w_hi = _gl_on(theta, hi, x, w)
        F_lo = np.asarray(self.F(s_lo), dtype=complex)
        F_hi = np.asarray(self.F(s_hi), dtype=complex)
        aim = abs(lam.imag)
        u1_lo, _ = k.u1(lam, s_lo)
        u2_hi, _ = k.u2(lam, s_hi)
        # scaled by exp(|Im| (s - theta)) and exp(|Im| (theta - s))
        i_lo = np.sum(w_lo * u1_lo * F_lo * np.exp(aim * (s_lo - theta[..., None])), axis=-1)
        i_hi = np.sum(w_hi * u2_hi * F_hi * np.exp(aim * (theta[..., None] - s_hi)), axis=-1)
        return i_lo, i_hi

    def _evaluate(self, theta, derivative: bool):
        theta = np.asarray(theta, dtype=float)
        k = self.kernel
        lam = complex(self.lam)
        aim = abs(lam.imag)
        W = complex(k.wronskian(np.array(lam)))
        u1, du1 = k.u1(lam, theta)
        u2, du2 = k.u2(lam, theta)
        x1 = theta + k.omega2
        x2 = k.omega1 - theta
        e1 = np.exp(aim * (x1 - k.omega))
        e2 = np.exp(aim * (x2 - k.omega))
        i_lo, i_hi = self._integrals(theta)
        if derivative:
            v1, v2 = du1, du2
        else:
            v1, v2 = u1, u2
        out = -self.a * v1 * e1 / W - self.b * v2 * e2 / W
        out = out + (v2 * i_lo + v1 * i_hi) / W
        return out

    def __call__(self, theta):
        return self._evaluate(theta, derivative=False)

    def derivative(self, theta):
        return self._evaluate(theta, derivative=True)


def solve_pencil(lam, rhs, bc_pair, omega1: float, omega2: float, n_gl: int = 64) -> AngularSolution:
    """Solve lam^2 phi + phi'' = F with the boundary data of ``rhs``.

    ``rhs`` is a triple (F, a_top, b_bottom); F is a vectorized callable of
    theta or None for a zero interior datum.  Raises NearSpectrumError when
    lam is within 1e-8 of an eigenvalue.
    """
    F, a, b = rhs
    kernel = PencilKernel(bc_pair, omega1, omega2)
    kernel.guard(lam)
    if F is not None and not callable(F):
        raise DataError("interior datum must be a callable of theta or None")
    return AngularSolution(complex(lam), kernel, F, complex(a), complex(b), n_gl)


# ---------------------------------------------------------------------------
# Chebyshev helpers for the angular variable


def chebyshev_nodes(a: float, b: float, n: int) -> np.ndarray:
    k = np.arange(n)
    x = np.cos(np.pi * k / (n - 1))[::-1]
    return a + 0.5 * (b - a) * (x + 1.0)


def barycentric_matrix(nodes: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Interpolation matrix from Chebyshev-Lobatto nodes to target points."""
    n = len(nodes)
    w = (-1.0) ** np.arange(n)
    w[0] *= 0.5
    w[-1] *= 0.5
    targets = np.asarray(targets, dtype=float).ravel()
    diff = targets[:, None] - nodes[None, :]
    exact = np.abs(diff) < 1e-15
    diff[exact] = 1.0
    c = w[None, :] / diff
    M = c / np.sum(c, axis=1, keepdims=True)
    rows = np.any(exact, axis=1)
    if np.any(rows):
        M[rows] = exact[rows].astype(float)
    return M


def chebyshev_diff_matrix(nodes: np.ndarray) -> np.ndarray:
    """First-derivative matrix on (affinely mapped) Chebyshev-Lobatto nodes."""
    n = len(nodes)
    a, b = nodes[0], nodes[-1]
    x = 2.0 * (nodes - a) / (b - a) - 1.0
    c = np.ones(n)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(n)
    X = x[:, None] - x[None, :]
    D = np.outer(c, 1.0 / c) / (X + np.eye(n))
    D -= np.diag(D.sum(axis=1))
    return D * 2.0 / (b - a)


def clenshaw_curtis_weights(a: float, b: float, n: int) -> np.ndarray:
    """Quadrature weights on the nodes returned by chebyshev_nodes."""
    N = n - 1
    theta = np.pi * np.arange(n) / N
    w = np.zeros(n)
    v = np.ones(N - 1)
    if N % 2 == 0:
        w[0] = w[N] = 1.0 / (N**2 - 1)
        for k in range(1, N // 2):
            v -= 2 * np.cos(2 * k * theta[1:-1]) / (4 * k * k - 1)
        v -= np.cos(N * theta[1:-1]) / (N**2 - 1)
    else:
        w[0] = w[N] = 1.0 / N**2
        for k in range(1, (N - 1) // 2 + 1):
            v -= 2 * np.cos(2 * k * theta[1:-1]) / (4 * k * k - 1)
    w[1:-1] = 2 * v / N
    return (w * 0.5 * (b - a))[::-1]


# ---------------------------------------------------------------------------
# batched solves used by the contour inversion


class PencilBatch:
    """Solve the pencil for many lambda values on a fixed angular layout.

    The interior datum is supplied on ``n_cheb`` Chebyshev nodes of I.  The
    Green's function integrals are accumulated panel by panel between the
    sorted output angles, each panel carrying ``n_panel`` Gauss nodes, with
    the exponential scale of the homogeneous solutions factored out.
    """

    def __init__(self, bc_pair, omega1: float, omega2: float, theta_out: np.ndarray,
                 n_cheb: int = 48, n_panel: int = 12):
        self.kernel = PencilKernel(bc_pair, omega1, omega2)
        self.theta_out = np.asarray(theta_out, dtype=float)
        self.cheb = chebyshev_nodes(-omega2, omega1, n_cheb)
        self.order = np.argsort(self.theta_out, kind="stable")
        ths = self.theta_out[self.order]
        edges = np.concatenate([[-omega2], ths, [omega1]])
        x, w = leggauss(n_panel)
        left, right = edges[:-1], edges[1:]
        half = 0.5 * (right - left)
        self.nodes = (0.5 * (left + right))[:, None] + half[:, None] * x[None, :]
        self.weights = half[:, None] * w[None, :]
        self.left, self.right = left, right
        self.sorted_theta = ths
        n_p = len(left)
        self.M = barycentric_matrix(self.cheb, self.nodes.ravel()).reshape(n_p, n_panel, n_cheb)

    def _particular(self, lam, aim, Fc):
        k = self.kernel
        n_p, n_g, _ = self.M.shape
        Fs = np.einsum("pgc,lc->lpg", self.M, Fc)
        lam3 = lam[:, :, None]
        aim3 = aim[:, :, None]
        s = self.nodes[None]
        u1s, _ = k.u1(lam3, s)
        u2s, _ = k.u2(lam3, s)
        wts = self.weights[None]
        # panel p integrals, scaled to the right edge (lower) and left edge (upper)
        lo = np.sum(wts * u1s * Fs * np.exp(aim3 * (s - self.right[None, :, None])), axis=-1)
        hi = np.sum(wts * u2s * Fs * np.exp(aim3 * (self.left[None, :, None] - s)), axis=-1)
        width = self.right - self.left
        n_out = n_p - 1
        A = np.empty((lam.shape[0], n_out), dtype=complex)
        B = np.empty_like(A)
        acc = np.zeros(lam.shape[0], dtype=complex)
        for j in range(n_out):
            acc = acc * np.exp(-aim[:, 0] * width[j]) + lo[:, j]
            A[:, j] = acc
        acc = np.zeros(lam.shape[0], dtype=complex)
        for j in range(n_out, 0, -1):
            acc = acc * np.exp(-aim[:, 0] * width[j]) + hi[:, j]
            B[:, j - 1] = acc
        return A, B

    def solve(self, lams: np.ndarray, Fhat: np.ndarray | None, ahat: np.ndarray, bhat: np.ndarray,
              derivative: bool = False, chunk: int = 128):
        """Return phi (n_lam, n_theta) and optionally phi' on theta_out."""
        k = self.kernel
        lams = np.asarray(lams, dtype=complex)
        k.guard(lams)
        n_lam = len(lams)
        th = self.sorted_theta
        phi = np.empty((n_lam, len(th)), dtype=complex)
        dphi = np.empty_like(phi) if derivative else None
        for start in range(0, n_lam, chunk):
            sl = slice(start, min(start + chunk, n_lam))
            lam = lams[sl][:, None]
            aim = np.abs(lam.imag)
            W = k.wronskian(lams[sl])[:, None]
            u1, du1 = k.u1(lam, th[None, :])
            u2, du2 = k.u2(lam, th[None, :])
            x1 = th[None, :] + k.omega2
            x2 = k.omega1 - th[None, :]
            e1 = np.exp(aim * (x1 - k.omega))
            e2 = np.exp(aim * (x2 - k.omega))
            a = ahat[sl][:, None]
            b = bhat[sl][:, None]
            base = -a * u1 * e1 / W - b * u2 * e2 / W
            dbase = (-a * du1 * e1 / W - b * du2 * e2 / W) if derivative else None
            if Fhat is not None:
                A, B = self._particular(lam, aim, Fhat[sl])
                base = base + (u2 * A + u1 * B) / W
                if derivative:
                    dbase = dbase + (du2 * A + du1 * B) / W
            phi[sl] = base
            if derivative:
                dphi[sl] = dbase
        inv = np.empty_like(self.order)
        inv[self.order] = np.arange(len(self.order))
        phi = phi[:, inv]
        if derivative:
            return phi, dphi[:, inv]
        return phi


# ---------------------------------------------------------------------------
# Laplace transform along a vertical contour


@dataclass
class SpectralField:
    """Samples of a transformed function on the line Re lam = -beta."""

    beta: float
    tau_nodes: np.ndarray
    angular_values: np.ndarray  # shape (n_tau,) or (n_tau, n_theta)
    truncation_tau_max: float = field(default=0.0)

    def __post_init__(self):
        self.tau_nodes = np.asarray(self.tau_nodes, dtype=float)
        self.angular_values = np.asarray(self.angular_values, dtype=complex)
        if not self.truncation_tau_max:
            self.truncation_tau_max = float(np.max(np.abs(self.tau_nodes)))

    @property
    def lambdas(self) -> np.ndarray:
        return -self.beta + 1j * self.tau_nodes


def contour_nodes(beta: float, tau_max: float, n_tau: int) -> np.ndarray:
    """Symmetric uniform tau nodes (odd count, includes tau = 0)."""
    if n_tau % 2 == 0:
        n_tau += 1
    return np.linspace(-tau_max, tau_max, n_tau)


def _check_decay(w, tol, what):
    w = np.asarray(w)
    scale = np.max(np.abs(w)) if w.size else 0.0
    if scale == 0.0:
        return
    ends = max(np.max(np.abs(w[0])), np.max(np.abs(w[-1])))
    if ends > tol * scale:
        raise TruncationError(f"{what} does not decay at the truncation ends "
                              f"(end/max = {ends / scale:.2e})")


def laplace_forward(w, t, lambdas, tol: float = 1e-10) -> np.ndarray:
    """Transform samples w(t) on a uniform grid: sum of e^{-lam t} w dt.

    ``w`` may have trailing dimensions (e.g. angular samples); the result has
    shape (len(lambdas),) + w.shape[1:].  The trapezoid rule is used, which
    is spectrally accurate for smooth integrands that decay at both ends.
    """
    t = np.asarray(t, dtype=float)
    w = np.asarray(w)
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=complex))
    if w.shape[0] != t.shape[0]:
        raise DataError("sample count does not match the t grid")
    weights = np.full(t.shape, t[1] - t[0])
    weights[0] *= 0.5
    weights[-1] *= 0.5
    for lam in (lambdas[0], lambdas[-1]):
        integrand = np.exp(-lam * t).reshape((-1,) + (1,) * (w.ndim - 1)) * w
        _check_decay(integrand, tol, "weighted signal")
    E = np.exp(-np.outer(lambdas, t)) * weights[None, :]
    return np.tensordot(E, w, axes=(1, 0))


def laplace_inverse(fld: SpectralField, t, tail_tol: float = 1e-8) -> np.ndarray:
    """Invert along the field's contour by the trapezoid rule in tau."""
    tau = fld.tau_nodes
    vals = fld.angular_values
    mag = np.abs(vals).reshape(len(tau), -1).max(axis=1)
    if mag.max() > 0:
        tail = max(mag[0], mag[-1]) / mag.max()
        if tail > tail_tol:
            raise TruncationError(f"spectral tail {tail:.2e} exceeds {tail_tol:.0e}")
    t = np.asarray(t, dtype=float)
    dtau = np.full(tau.shape, tau[1] - tau[0])
    dtau[0] *= 0.5
    dtau[-1] *= 0.5
    lam = fld.lambdas
    E = np.exp(np.outer(t, lam)) * dtau[None, :] / (2 * np.pi)
    out = np.tensordot(E, vals, axes=(1, 0))
    return out


def parseval_sides(u, t, beta: float, tau_max: float = 40.0, n_tau: int = 4001):
    """Both sides of the Parseval identity for the weight e^{beta t}."""
    t = np.asarray(t, dtype=float)
    u = np.asarray(u, dtype=float)
    dt = t[1] - t[0]
    wt = np.full(t.shape, dt)
    wt[0] *= 0.5
    wt[-1] *= 0.5
    lhs = float(np.sum(wt * np.exp(2 * beta * t) * u**2))
    tau = contour_nodes(beta, tau_max, n_tau)
    uh = laplace_forward(u, t, -beta + 1j * tau)
    dtau = np.full(tau.shape, tau[1] - tau[0])
    dtau[0] *= 0.5
    dtau[-1] *= 0.5
    rhs = float(np.sum(dtau * np.abs(uh) ** 2) / (2 * np.pi))
    return lhs, rhs


# ---------------------------------------------------------------------------
# eigen systems


@dataclass
class EigenEntry:
    m: int
    lam: float
    lam_numeric: float
    kind: str  # "cos" or "sin"
    omega2: float

    def eigenfunction(self, theta):
        x = np.asarray(theta, dtype=float) + self.omega2
        if self.kind == "cos":
            return np.cos(self.lam * x)
        if self.lam == 0.0:
            return np.zeros_like(x)
        return np.sin(self.lam * x)

    def eigenfunction_derivative(self, theta):
        x = np.asarray(theta, dtype=float) + self.omega2
        if self.kind == "cos":
            return -self.lam * np.sin(self.lam * x)
        return self.lam * np.cos(self.lam * x)


@dataclass
class EigenSystem:
    bc_pair: tuple[str, str]
    omega: float
    omega2: float
    entries: list[EigenEntry]

    @property
    def label(self) -> str:
        return bc_label(self.bc_pair)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([e.lam for e in self.entries])

    def excluded_lines(self) -> np.ndarray:
        """Values of Re lam that a weight line must avoid."""
        vals = list(self.eigenvalues)
        if self.bc_pair == (DIRICHLET, DIRICHLET):
            vals.append(0.0)
        return np.unique(np.array(vals))

    def admissible_weight_lines(self, l: int, beta_range=(-10.0, 10.0)) -> list[tuple[float, float]]:
        """Open beta intervals for which Re lam = -beta + l - 1 avoids the spectrum."""
        bad = sorted(l - 1 - lam for lam in self.excluded_lines())
        lo, hi = beta_range
        cuts = [b for b in bad if lo < b < hi]
        edges = [lo] + cuts + [hi]
        return [(edges[i], edges[i + 1]) for i in range(len(edges) - 1)]

    def is_admissible(self, l: int, beta: float, tol: float = 1e-12) -> bool:
        line = -beta + l - 1
        return bool(np.all(np.abs(self.excluded_lines() - line) > tol))

    def nearest(self, value: float) -> EigenEntry:
        return min(self.entries, key=lambda e: abs(e.lam - value))

    def exclusion_verdict(self) -> tuple[bool, str]:
        lams = self.eigenvalues
        if self.bc_pair[0] != self.bc_pair[1]:
            ok = not np.any((lams >= -1.0) & (lams <= 1.0))
            return ok, "excluded on [-1,1]" if ok else "eigenvalue in [-1,1]"
        ok = not np.any((lams >= -1.0) & (lams < 0.0))
        return ok, "excluded on [-1,0)" if ok else "eigenvalue in [-1,0)"

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["m", "lambda", "bc_pair", "omega"])
        for e in self.entries:
            wr.writerow([e.m, f"{e.lam:.15g}", self.label, f"{self.omega:.15g}"])
        return buf.getvalue()


def _determinant_real(bc_pair, omega):
    top, bottom = normalize_bc_pair(bc_pair)
    if top != bottom:
        return lambda x: np.cos(x * omega)
    return lambda x: np.sin(x * omega)


def eigensystem(bc_pair, omega: float, m_range=range(-4, 5), omega2: float | None = None) -> EigenSystem:
    """Closed-form eigenvalues cross-checked by bracketing root finding."""
    top, bottom = normalize_bc_pair(bc_pair)
    omega = float(omega)
    if not (0.0 < omega < np.pi):
        raise PreconditionError(f"contact angle {omega} outside (0, pi)")
    if omega2 is None:
        omega2 = 0.5 * omega
    det = _determinant_real((top, bottom), omega)
    half_gap = 0.5 * np.pi / omega
    kind = "cos" if bottom == NEUMANN else "sin"
    entries = []
    for m in m_range:
        lam = eigenvalue_formula((top, bottom), omega, m)
        if lam is None:
            continue
        a, b = lam - 0.5 * half_gap, lam + 0.5 * half_gap
        if np.sign(det(a)) == np.sign(det(b)):
            lam_num = lam
        else:
            lam_num = brentq(det, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
        entries.append(EigenEntry(int(m), float(lam), float(lam_num), kind, float(omega2)))
    entries.sort(key=lambda e: e.lam)
    return EigenSystem((top, bottom), omega, float(omega2), entries)


# ---------------------------------------------------------------------------
# parameter-dependent norms and the resolvent estimate


def _angular_derivatives(solution: AngularSolution, nodes, order: int, F_derivs):
    lam2 = solution.lam**2
    d = [solution(nodes), solution.derivative(nodes)]
    for k in range(2, order + 1):
        d.append(F_derivs[k - 2] - lam2 * d[k - 2])
    return d[: order + 1]


def hl_lambda_norm(derivs, weights, lam, l: int) -> float:
    """(||.||^2_{H^l(I)} + |lam|^{2l} ||.||^2_{L^2(I)})^{1/2} from derivative samples."""
    sob = sum(float(np.sum(weights * np.abs(derivs[k]) ** 2)) for k in range(l + 1))
    l2 = float(np.sum(weights * np.abs(derivs[0]) ** 2))
    return float(np.sqrt(sob + abs(lam) ** (2 * l) * l2))


def resolvent_terms(lam, rhs, bc_pair, omega1, omega2, l: int, n_nodes: int = 64):
    """Left side and the bracket on the right side of the resolvent estimate."""
    F, a, b = rhs
    sol = solve_pencil(lam, rhs, bc_pair, omega1, omega2)
    nodes = chebyshev_nodes(-omega2, omega1, n_nodes)
    weights = clenshaw_curtis_weights(-omega2, omega1, n_nodes)
    D = chebyshev_diff_matrix(nodes)
    Fv = np.zeros(n_nodes, dtype=complex) if F is None else np.asarray(F(nodes), dtype=complex)
    F_derivs = [Fv]
    for _ in range(max(l, 2)):
        F_derivs.append(D @ F_derivs[-1])
    derivs = _angular_derivatives(sol, nodes, l, F_derivs)
    lhs = hl_lambda_norm(derivs, weights, lam, l)
    rhs_F = hl_lambda_norm(F_derivs[: max(l - 2, 0) + 1], weights, lam, max(l - 2, 0))
    bracket = rhs_F + (1 + abs(lam) ** (l - 0.5)) * abs(a) + (1 + abs(lam) ** (l - 1.5)) * abs(b)
    return lhs, bracket, sol


def resolvent_norm_check(lam, rhs, bc_pair, omega1, omega2, l: int = 2, C: float = 100.0):
    """Return (lhs, C * bracket, pass) for the parameter-dependent estimate."""
    lhs, bracket, _ = resolvent_terms(lam, rhs, bc_pair, omega1, omega2, l)
    bound = C * bracket
    return lhs, bound, bool(lhs <= bound * (1 + 1e-12))


def fit_resolvent_constant(lams, rhs, bc_pair, omega1, omega2, l: int = 2) -> float:
    """Smallest C that covers every sample of the sweep."""
    ratios = []
    for lam in lams:
        lhs, bracket, _ = resolvent_terms(lam, rhs, bc_pair, omega1, omega2, l)
        if bracket > 0:
            ratios.append(lhs / bracket)
    return float(max(ratios)) if ratios else 0.0


# ---------------------------------------------------------------------------
# transforms on a uniform tau grid by folding and FFT


def folded_transform(samples, t0: float, dt: float, beta: float, n_period: int, n_tau: int):
    """Trapezoid transform at lam_j = -beta + 2 pi i j / (n_period dt), j < n_tau.

    ``samples`` holds w(t0 + n dt) along axis 0 (any trailing shape).  Since
    e^{-i tau_j t} is periodic with period n_period * dt, the weighted
    samples are folded onto one period and a single FFT gives every node.
    """
    samples = np.asarray(samples)
    n = samples.shape[0]
    t = t0 + dt * np.arange(n)
    g = samples * np.exp(beta * t).reshape((-1,) + (1,) * (samples.ndim - 1))
    folded = np.zeros((n_period,) + samples.shape[1:], dtype=complex)
    idx = np.arange(n) % n_period
    np.add.at(folded, idx, g)
    spec = np.fft.fft(folded, axis=0)[:n_tau] * dt
    tau = 2 * np.pi * np.arange(n_tau) / (n_period * dt)
    phase = np.exp(-1j * tau * t0).reshape((-1,) + (1,) * (samples.ndim - 1))
    return tau, spec * phase


def half_line_inverse(lams: np.ndarray, values: np.ndarray, t, dtau: float) -> np.ndarray:
    """Real inverse transform from nodes tau_j = j dtau, j >= 0 (conjugate symmetry).

    ``values`` has shape (n_tau, ...); the output has shape (len(t), ...).
    """
    t = np.asarray(t, dtype=float)
    wts = np.full(len(lams), 2.0)
    wts[0] = 1.0
    E = np.exp(np.outer(t, lams)) * wts[None, :] * (dtau / (2 * np.pi))
    return np.real(np.tensordot(E, values, axes=(1, 0)))
