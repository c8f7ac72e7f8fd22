"""Seeded data families and estimate sweeps.

Random families come from a 64-bit linear congruential generator

    state <- (6364136223846793005 * state + 1442695040888963407) mod 2^64

whose top 53 bits give a uniform number in [0, 1).  Instance i of a family
with seed s starts from state = s * 1000003 + i, discards one step, and
draws its parameters in a fixed order (see ``smooth_instance``), so the same
seed reproduces the same family in any implementation.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bvp_solver import KINDS, ProblemData, compatibility_defect, solve_full
from .cutoffs import smooth_plateau
from .errors import PreconditionError
from .estimates import NormGrid, data_norm, field_norm
from .geometry import SurfaceProfile, build_domain

LCG_A = 6364136223846793005
LCG_C = 1442695040888963407
MASK64 = (1 << 64) - 1


class LCG:
    def __init__(self, state: int):
        self.state = int(state) & MASK64

    def next_u64(self) -> int:
        self.state = (LCG_A * self.state + LCG_C) & MASK64
        return self.state

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        return lo + (hi - lo) * ((self.next_u64() >> 11) / float(1 << 53))


def instance_rng(seed: int, index: int) -> LCG:
    rng = LCG(seed * 1000003 + index)
    rng.next_u64()
    return rng


def smooth_bump(r, center: float, half_width: float):
    """exp(1 - 1/(1 - u^2)) with u = (r - center)/half_width, zero for |u| >= 1."""
    u = (np.asarray(r, dtype=float) - center) / half_width
    inside = np.abs(u) < 1.0
    return np.where(inside, np.exp(1.0 - 1.0 / np.where(inside, 1.0 - u * u, 1.0)), 0.0)


@dataclass
class BumpParams:
    center: float
    half_width: float
    amplitude: float
    angle: float = 0.0


@dataclass
class SmoothInstance:
    index: int
    data: ProblemData
    params: dict = field(default_factory=dict)


def _draw_bump(rng: LCG, delta: float) -> BumpParams:
    center = rng.uniform(0.45, 0.6) * delta
    half_width = rng.uniform(0.3, 0.4) * delta
    amplitude = rng.uniform(0.5, 2.0)
    return BumpParams(center, half_width, amplitude)


def smooth_instance(kind: str, profile: SurfaceProfile, seed: int, index: int,
                    x_max: float | None = None) -> SmoothInstance:
    """Seeded smooth data supported inside the corner patch.

    Draw order: interior bump (center, half width, amplitude, angle fraction),
    top bump (center, half width, amplitude), bottom bump (same).  The top and
    bottom data are bumps in the abscissa.  For the Neumann problem the bottom
    datum is shifted by a multiple of a fixed bump so that the compatibility
    integral holds exactly on the truncated domain.
    """
    kind = kind.upper()
    if kind not in KINDS:
        raise PreconditionError(f"unknown problem kind {kind!r}")
    delta = profile.patch_radius
    rng = instance_rng(seed, index)
    hb = _draw_bump(rng, delta)
    hb.angle = rng.uniform(0.25, 0.75)
    fb = _draw_bump(rng, delta)
    gb = _draw_bump(rng, delta)
    q = -profile.omega2 + hb.angle * profile.omega
    cx, cz = hb.center * np.cos(q), hb.center * np.sin(q)

    def h(x, z):
        return hb.amplitude * smooth_bump(np.hypot(x - cx, z - cz), 0.0, hb.half_width * 0.6)

    def f(x):
        return fb.amplitude * smooth_bump(x, fb.center, fb.half_width)

    def g0(x):
        return gb.amplitude * smooth_bump(x, gb.center, gb.half_width)

    data = ProblemData(h=h, f=f, g=g0)
    params = {"h": hb, "f": fb, "g": gb}
    if kind == "NVP":
        info = build_domain(profile, None, x_max)
        ih, ib = compatibility_defect(profile, data, info.x_max)
        unit = ProblemData(g=lambda x: smooth_bump(x, 0.5 * delta, 0.4 * delta))
        _, ig = compatibility_defect(profile, unit, info.x_max)
        alpha = (ih - ib) / ig
        data = ProblemData(h=h, f=f, g=lambda x: g0(x) + alpha * smooth_bump(x, 0.5 * delta, 0.4 * delta))
        params["g_shift"] = alpha
    return SmoothInstance(index, data, params)


def dn_family(profile: SurfaceProfile, seed: int, size: int):
    """Top data (r / rho)^2 times a cutoff on [rho/2, rho], rho in [delta/2, delta]."""
    delta = profile.patch_radius
    out = []
    for i in range(size):
        rng = instance_rng(seed, i)
        rho = rng.uniform(0.5, 1.0) * delta
        amp = rng.uniform(0.5, 2.0)
        out.append(lambda r, rho=rho, amp=amp: amp * (np.asarray(r) / rho) ** 2
                   * smooth_plateau(np.asarray(r), 0.5 * rho, rho))
    return out


# ---------------------------------------------------------------------------
# estimate sweeps


def estimate_weight(kind: str, l: int, beta: float) -> float:
    """Weight of the solution space: l - 2 + beta (mixed), l - 1 + beta otherwise."""
    return l - 2 + beta if kind.upper() == "MBVP" else l - 1 + beta


def check_weight_range(kind: str, beta: float):
    kind = kind.upper()
    if kind == "MBVP" and not (0.0 <= beta <= 2.0):
        raise PreconditionError(f"mixed estimate needs beta in [0, 2], got {beta}")
    if kind in ("DVP", "NVP") and not (0.0 < beta <= 1.0):
        raise PreconditionError(f"Dirichlet/Neumann estimate needs beta in (0, 1], got {beta}")


@dataclass
class EstimateRow:
    instance: int
    l: int
    beta: float
    weight: float
    h_norm: float
    f_norm: float
    g_norm: float
    data_norm: float
    u_norm: float
    ratio: float
    residual: float


@dataclass
class SweepSettings:
    kind: str
    profile: SurfaceProfile
    ls: tuple
    betas: tuple
    seed: int
    size: int
    zero: bool = False
    grid: NormGrid = field(default_factory=NormGrid)
    n_xi: int = 321
    n_s: int = 33


def _run_instance(settings: SweepSettings, index: int) -> list:
    kind = settings.kind.upper()
    if settings.zero:
        data = ProblemData()
    else:
        data = smooth_instance(kind, settings.profile, settings.seed, index).data
    sol = solve_full(kind, settings.profile, data, decompose=False, n_xi=settings.n_xi, n_s=settings.n_s)
    rows = []
    for l in settings.ls:
        for beta in settings.betas:
            w = estimate_weight(kind, l, beta)
            if settings.zero:
                dn = {"h": 0.0, "f": 0.0, "g": 0.0, "total": 0.0}
                un = float(np.max(np.abs(sol.u.values)))
            else:
                dn = data_norm(kind, settings.profile, data, l, w, grid=settings.grid)
                un = field_norm(sol.u, settings.profile, l, w, grid=settings.grid)["total"]
            ratio = un / dn["total"] if dn["total"] > 0 else 0.0
            rows.append(EstimateRow(index, l, beta, w, dn["h"], dn["f"], dn["g"], dn["total"], un, ratio,
                                    float(sol.u.meta["residual"])))
    return rows


def run_sweep(settings: SweepSettings, parallel: int = 1) -> list:
    """All rows, ordered by instance id whatever the schedule."""
    for b in settings.betas:
        check_weight_range(settings.kind, b)
    if any(l < 2 for l in settings.ls):
        raise PreconditionError("estimates need l >= 2")
    idx = list(range(settings.size))
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as ex:
            chunks = list(ex.map(_run_instance, [settings] * len(idx), idx))
    else:
        chunks = [_run_instance(settings, i) for i in idx]
    return [row for chunk in chunks for row in chunk]


def summarize(rows: list, max_spread: float = 1e2) -> list:
    """Per (l, beta): (l, beta, max ratio, spread, pass)."""
    out = []
    keys = sorted({(r.l, r.beta) for r in rows})
    for l, beta in keys:
        rat = np.array([r.ratio for r in rows if r.l == l and r.beta == beta])
        finite = bool(np.all(np.isfinite(rat)))
        pos = rat[rat > 0]
        spread = float(pos.max() / pos.min()) if pos.size else 1.0
        ok = finite and spread < max_spread
        out.append((l, beta, float(rat.max()) if rat.size else 0.0, spread, ok))
    return out

