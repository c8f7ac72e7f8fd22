"""Weighted norms of solutions and data on a corner domain.

A field u on the physical domain is measured the same way the solver splits
it: chi u pulled back to the cone by T_c in a Kondratiev norm, and
(1 - chi) u pulled back to the flat strip in a plain Sobolev norm.  Boundary
data are measured by the trace norms along the two boundary rays,
parametrized by the distance r to the corner.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bvp_solver import KINDS, CutoffSpec, ProblemData, cone_map
from .errors import PreconditionError
from .geometry import SurfaceProfile, build_domain, map_TR
from .weighted_spaces import GridFunction, hnorm_strip, trace_norm, vnorm_cone


def top_abscissa(profile: SurfaceProfile, r, tol: float = 1e-14, max_iter: int = 60):
    """x with |(x, eta(x))| = r, by Newton from the tangent-line guess."""
    r = np.asarray(r, dtype=float)
    x = r * np.cos(profile.omega1)
    for _ in range(max_iter):
        e, e1 = profile.eta(x), profile.eta(x, 1)
        rho = np.hypot(x, e)
        dx = (rho - r) / ((x + e * e1) / np.maximum(rho, 1e-300))
        x = x - dx
        if np.all(np.abs(dx) <= tol * np.maximum(r, 1e-300)):
            break
    return x


def boundary_abscissa(profile: SurfaceProfile, r, side: str):
    if side == "top":
        return top_abscissa(profile, r)
    return np.asarray(r, dtype=float) * np.cos(profile.omega2)


def ray_samples(fn_x, profile: SurfaceProfile, side: str, t) -> GridFunction:
    """A boundary datum given in the abscissa, resampled on a uniform ln r grid."""
    x = boundary_abscissa(profile, np.exp(t), side)
    vals = np.asarray(fn_x(x), dtype=float) * np.ones(x.shape)
    return GridFunction("ray", (t,), vals, 4, {"side": side})


def _value_fn(u):
    return u.value if hasattr(u, "value") else u


@dataclass
class NormGrid:
    """Sampling used for all domain norms of one experiment."""

    t_min: float = -8.0
    n_t: int = 481
    n_theta: int = 33
    n_x: int = 801
    n_z: int = 33
    n_ray: int = 385


def _cone_t_max(profile: SurfaceProfile, delta: float) -> float:
    smin = float(np.linalg.svd(profile.P0, compute_uv=False)[-1])
    return float(np.log(1.2 * delta / smin))


def domain_pieces(u, profile: SurfaceProfile, cutoff: CutoffSpec | None = None,
                  grid: NormGrid | None = None, x_max: float | None = None):
    """(cone part chi u o T_c, strip part (1 - chi) u o T_R) as grid functions."""
    grid = grid or NormGrid()
    cutoff = cutoff or CutoffSpec(profile.patch_radius)
    info = build_domain(profile, None, x_max)
    fn = _value_fn(u)
    cmap = cone_map(profile)
    t = np.linspace(grid.t_min, _cone_t_max(profile, cutoff.delta), grid.n_t)
    q = np.linspace(-profile.omega2, profile.omega1, grid.n_theta)
    T, Q = np.meshgrid(t, q, indexing="ij")
    X = np.stack([np.exp(T) * np.cos(Q), np.exp(T) * np.sin(Q)], -1)
    Y = cmap.forward(X)
    chi = cutoff.chi(np.hypot(Y[..., 0], Y[..., 1]))
    vc = np.where(chi > 0, chi * fn(Y[..., 0], Y[..., 1]), 0.0)
    cone = GridFunction("cone", (t, q), vc)
    xs = np.linspace(info.x_delta, info.x_max, grid.n_x)
    zs = np.linspace(0.0, 1.0, grid.n_z)
    XS, ZS = np.meshgrid(xs, zs, indexing="ij")
    P = map_TR(np.stack([XS, ZS], -1), profile)
    one_minus = 1.0 - cutoff.chi(np.hypot(P[..., 0], P[..., 1]))
    vr = one_minus * fn(P[..., 0], P[..., 1])
    strip = GridFunction("strip", (xs, zs), vr)
    return cone, strip


def field_norm(u, profile: SurfaceProfile, l: int, weight: float, cutoff: CutoffSpec | None = None,
               grid: NormGrid | None = None, x_max: float | None = None) -> dict:
    """||u||_{V^l_weight(Omega)} split into its cone and strip contributions."""
    cone, strip = domain_pieces(u, profile, cutoff, grid, x_max)
    c = vnorm_cone(cone, l, weight).value
    s = hnorm_strip(strip, l)
    return {"cone": c, "strip": s, "total": c + s}


def trace_order_norm(fn_x, profile: SurfaceProfile, side: str, order: float, weight: float,
                     grid: NormGrid | None = None, r_max: float | None = None) -> float:
    """V^{order}_weight norm of a boundary datum; order is a positive half-integer."""
    grid = grid or NormGrid()
    if fn_x is None:
        return 0.0
    l = int(round(order + 0.5))
    if abs(l - 0.5 - order) > 1e-12 or l < 1:
        raise PreconditionError(f"trace order {order} must be a positive half-integer")
    r_max = r_max or 2.0 * profile.patch_radius
    t = np.linspace(grid.t_min, np.log(r_max), grid.n_ray)
    return trace_norm(ray_samples(fn_x, profile, side, t), l, weight, side).value


def data_norm(kind: str, profile: SurfaceProfile, data: ProblemData, l: int, weight: float,
              cutoff: CutoffSpec | None = None, grid: NormGrid | None = None,
              x_max: float | None = None) -> dict:
    """Right-hand side of the a priori estimate for the problem ``kind``.

    h is measured in V^{l-2}, Dirichlet data in V^{l-1/2} and Neumann data in
    V^{l-3/2} of the boundary, all with the same weight as the solution.
    """
    top, bottom = KINDS[kind.upper()]
    out = {"h": 0.0, "f": 0.0, "g": 0.0}
    if data.h is not None:
        out["h"] = field_norm(data.h_at, profile, l - 2, weight, cutoff, grid, x_max)["total"]
    for key, side, bc, fn in (("f", "top", top, data.f), ("g", "bottom", bottom, data.g)):
        if fn is None:
            continue
        order = l - 0.5 if bc == "dirichlet" else l - 1.5
        out[key] = trace_order_norm(data.f_at if key == "f" else data.g_at, profile, side, order,
                                    weight, grid)
    out["total"] = out["h"] + out["f"] + out["g"]
    return out
