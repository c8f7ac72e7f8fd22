"""Bilinear finite elements for div(A grad u) = S on a tensor-product chart.

All charts in the package reduce their problem to this form: the chart
coefficient A already carries the Jacobian of the map, and S is the
pulled-back source times that Jacobian.  Boundary conditions are given per
side; Neumann data are conormal fluxes n.A grad u per unit chart length.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.polynomial.legendre import leggauss

from .errors import AssemblyError, GeometryError, SolverError

SIDES = ("left", "right", "bottom", "top")


@dataclass
class SideCondition:
    """``kind`` is 'dirichlet' or 'neumann'; ``data`` maps the chart point
    arrays (X, Y) on that side to values (None means zero)."""

    kind: str
    data: Callable | None = None

    def __post_init__(self):
        if self.kind not in ("dirichlet", "neumann"):
            raise ValueError(f"unknown side condition {self.kind!r}")


@dataclass
class Q1Result:
    x: np.ndarray
    y: np.ndarray
    values: np.ndarray
    residual: float
    meta: dict = field(default_factory=dict)


def _side_nodes(nx, ny, side):
    ix, iy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    idx = ix * ny + iy
    return {"left": idx[0, :], "right": idx[-1, :], "bottom": idx[:, 0], "top": idx[:, -1]}[side]


def assemble(x, y, coef, source=None, n_gauss: int = 3):
    """Stiffness matrix K and load b with K u = b for the weak form
    int A grad u . grad phi = -int S phi (+ boundary fluxes, added later)."""
    nx, ny = len(x), len(y)
    g, w = leggauss(n_gauss)
    hx = np.diff(x)
    hy = np.diff(y)
    # element corners (0,0),(1,0),(0,1),(1,1) in reference [0,1]^2
    xi = 0.5 * (g + 1.0)
    wq = 0.5 * w
    XI, ETA = np.meshgrid(xi, xi, indexing="ij")
    WQ = np.outer(wq, wq)
    XI, ETA, WQ = XI.ravel(), ETA.ravel(), WQ.ravel()
    N = np.stack([(1 - XI) * (1 - ETA), XI * (1 - ETA), (1 - XI) * ETA, XI * ETA], axis=-1)
    dN_dxi = np.stack([-(1 - ETA), (1 - ETA), -ETA, ETA], axis=-1)
    dN_deta = np.stack([-(1 - XI), -XI, (1 - XI), XI], axis=-1)

    ex, ey = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1), indexing="ij")
    ex, ey = ex.ravel(), ey.ravel()
    hxe, hye = hx[ex], hy[ey]
    Xq = x[ex][:, None] + hxe[:, None] * XI[None, :]
    Yq = y[ey][:, None] + hye[:, None] * ETA[None, :]
    A = np.asarray(coef(Xq, Yq), dtype=float)
    if A.shape != Xq.shape + (2, 2):
        raise AssemblyError("coefficient must return an array of shape (..., 2, 2)")
    if not np.all(np.isfinite(A)):
        raise GeometryError("coefficient field has non-finite entries")
    det = A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
    if np.any(A[..., 0, 0] <= 0) or np.any(det <= 0):
        raise GeometryError("coefficient field is not positive definite")
    Gx = dN_dxi[None, :, :] / hxe[:, None, None]
    Gy = dN_deta[None, :, :] / hye[:, None, None]
    area = (hxe * hye)[:, None] * WQ[None, :]
    A00, A01, A10, A11 = A[..., 0, 0], A[..., 0, 1], A[..., 1, 0], A[..., 1, 1]
    Ke = (np.einsum("eq,eqa,eqb->eab", area * A00, Gx, Gx)
          + np.einsum("eq,eqa,eqb->eab", area * A01, Gx, Gy)
          + np.einsum("eq,eqa,eqb->eab", area * A10, Gy, Gx)
          + np.einsum("eq,eqa,eqb->eab", area * A11, Gy, Gy))
    nodes = np.stack([ex * ny + ey, (ex + 1) * ny + ey, ex * ny + ey + 1, (ex + 1) * ny + ey + 1], axis=-1)
    rows = np.repeat(nodes, 4, axis=1).ravel()
    cols = np.tile(nodes, (1, 4)).ravel()
    K = sp.csr_matrix((Ke.ravel(), (rows, cols)), shape=(nx * ny, nx * ny))
    b = np.zeros(nx * ny)
    if source is not None:
        S = np.asarray(source(Xq, Yq), dtype=float)
        be = -np.einsum("eq,eq,qa->ea", area, S, N)
        np.add.at(b, nodes.ravel(), be.ravel())
    return K, b


def _edge_load(x, y, side, flux, n_gauss=3):
    """Integral of flux * phi along one side, as nodal contributions."""
    g, w = leggauss(n_gauss)
    s = 0.5 * (g + 1.0)
    ws = 0.5 * w
    along = y if side in ("left", "right") else x
    h = np.diff(along)
    pts = along[:-1, None] + h[:, None] * s[None, :]
    if side in ("left", "right"):
        X = np.full(pts.shape, x[0] if side == "left" else x[-1])
        Y = pts
    else:
        X = pts
        Y = np.full(pts.shape, y[0] if side == "bottom" else y[-1])
    q = np.asarray(flux(X, Y), dtype=float) * np.broadcast_to(np.ones(pts.shape), pts.shape)
    lo = np.sum(q * (1 - s)[None, :] * ws[None, :], axis=1) * h
    hi = np.sum(q * s[None, :] * ws[None, :], axis=1) * h
    load = np.zeros(len(along))
    load[:-1] += lo
    load[1:] += hi
    return load


def solve_q1(x, y, coef, source=None, sides: dict | None = None, n_gauss: int = 3) -> Q1Result:
    """Solve div(A grad u) = S with the given side conditions.

    ``sides`` maps 'left' | 'right' | 'bottom' | 'top' to SideCondition; a
    missing side carries zero flux.  Without any Dirichlet side the constant
    null space is removed by fixing the nodal mean to zero.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    nx, ny = len(x), len(y)
    sides = dict(sides or {})
    K, b = assemble(x, y, coef, source, n_gauss)
    for side, cond in sides.items():
        if cond.kind == "neumann" and cond.data is not None:
            idx = _side_nodes(nx, ny, side)
            b[idx] += _edge_load(x, y, side, cond.data, n_gauss)
    # Dirichlet sides are applied after Neumann ones so corners take Dirichlet values
    fixed = np.zeros(nx * ny, dtype=bool)
    u = np.zeros(nx * ny)
    X, Y = np.meshgrid(x, y, indexing="ij")
    Xf, Yf = X.ravel(), Y.ravel()
    for side, cond in sides.items():
        if cond.kind == "dirichlet":
            idx = _side_nodes(nx, ny, side)
            fixed[idx] = True
            u[idx] = 0.0 if cond.data is None else np.asarray(cond.data(Xf[idx], Yf[idx]), dtype=float)
    free = ~fixed
    rhs = b - K @ u
    Kff = K[free][:, free]
    if not np.any(fixed):
        c = np.full(nx * ny, 1.0 / (nx * ny))
        Kb = sp.bmat([[Kff, sp.csr_matrix(c[:, None])], [sp.csr_matrix(c[None, :]), None]], format="csc")
        sol = spla.spsolve(Kb, np.concatenate([rhs[free], [0.0]]))
        u[free] = sol[:-1]
        res_vec = Kb @ sol - np.concatenate([rhs[free], [0.0]])
        scale = np.linalg.norm(rhs) + 1e-300
    else:
        sol = spla.spsolve(Kff.tocsc(), rhs[free])
        u[free] = sol
        res_vec = Kff @ sol - rhs[free]
        scale = np.linalg.norm(rhs[free]) + 1e-300
    if not np.all(np.isfinite(u)):
        raise SolverError("sparse solve produced non-finite values")
    residual = float(np.linalg.norm(res_vec) / scale) if np.linalg.norm(rhs) > 0 else 0.0
    if residual > 1e-10:
        sol2, info = spla.gmres(Kff, rhs[free], x0=u[free], rtol=1e-12, maxiter=2000)
        if info != 0:
            raise SolverError(f"linear solve did not converge (relative residual {residual:.2e})")
        u[free] = sol2
        residual = float(np.linalg.norm(Kff @ sol2 - rhs[free]) / scale)
    return Q1Result(x, y, u.reshape(nx, ny), residual, {"n_x": nx, "n_y": ny})


def refine(nodes: np.ndarray) -> np.ndarray:
    """Bisect every interval."""
    mid = 0.5 * (nodes[:-1] + nodes[1:])
    out = np.empty(2 * len(nodes) - 1)
    out[0::2] = nodes
    out[1::2] = mid
    return out


def solve_q1_extrapolated(x, y, coef, source=None, sides=None,
                          richardson: bool = True) -> Q1Result:
    """Q1 solve with one Richardson step on the bisected grid.

    Nodal errors of bilinear elements on tensor grids expand in even powers
    of h for smooth solutions, so (4 u_fine - u_coarse)/3 at the coarse
    nodes is fourth-order accurate.
    """
    coarse = solve_q1(x, y, coef, source, sides)
    if not richardson:
        return coarse
    xf, yf = refine(np.asarray(x, float)), refine(np.asarray(y, float))
    fine = solve_q1(xf, yf, coef, source, sides)
    vals = (4.0 * fine.values[0::2, 0::2] - coarse.values) / 3.0
    if not any(c.kind == "dirichlet" for c in (sides or {}).values()):
        vals = vals - np.mean(vals)
    return Q1Result(coarse.x, coarse.y, vals, max(coarse.residual, fine.residual),
                    {"n_x": len(x), "n_y": len(y), "richardson": True,
                     "correction": float(np.max(np.abs(vals - coarse.values)))})
