"""Command-line driver: eigen | solve | verify | dn.

Configuration files are flat ``key = value`` text with dotted keys; ``#``
starts a comment.  Every CSV written starts with the resolved configuration
as ``# key = value`` lines, so a report carries everything needed to rerun it.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bvp_solver import KINDS, AnalyticField, ProblemData, _bottom_normal, _top_normal, solve_full
from .dn_operator import dn_apply, dn_estimate_report, wedge_dn_closed_form
from .errors import ConfigError, CornerError, PreconditionError, ToleranceError
from .estimates import NormGrid, field_norm
from .experiments import SweepSettings, dn_family, run_sweep, summarize
from .geometry import SurfaceProfile
from .mellin_wedge import eigensystem

DEFAULTS = {
    "problem.kind": "MBVP",
    "eta.kind": "polynomial",
    "eta.params": "0, 0.5773502691896258",
    "gamma": "0.5773502691896258",
    "x0": "1.0",
    "H": "1e6",
    "delta": "0.25",
    "grid.n_t": "481",
    "grid.n_theta": "33",
    "grid.n_x": "801",
    "grid.n_z": "33",
    "grid.T_min": "-8",
    "grid.n_xi": "321",
    "grid.n_s": "33",
    "weights.l": "2, 3",
    "weights.beta": "",
    "contour.beta_contour": "0.5",
    "contour.tau_max": "64",
    "contour.n_tau": "256",
    "tol.spread": "100",
    "tol.manufactured": "1e-5",
    "output.path": "out",
    "seed": "1",
    "family.size": "10",
    "family.kind": "random",
    "data.id": "family",
    "data.index": "0",
    "data.value": "1.0",
    "verify.target": "estimate",
    "dn.k": "2",
    "dn.beta": "2",
    "dn.mu": "1",
    "run.parallel": "1",
}

INT_KEYS = {"grid.n_t", "grid.n_theta", "grid.n_x", "grid.n_z", "grid.n_xi", "grid.n_s",
            "contour.n_tau", "seed", "family.size", "data.index", "dn.k", "run.parallel"}
POSITIVE_KEYS = {"x0", "H", "delta", "gamma", "contour.tau_max", "tol.spread", "tol.manufactured",
                 "grid.n_t", "grid.n_theta", "grid.n_x", "grid.n_z", "grid.n_xi", "grid.n_s",
                 "contour.n_tau", "family.size", "run.parallel"}


def parse_config_text(text: str) -> dict:
    """Flat key = value pairs; errors name the offending line."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _floats(key: str, text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"key {key!r}: expected comma-separated numbers, got {text!r}") from None


@dataclass
class ExperimentConfig:
    values: dict
    profile: SurfaceProfile = field(init=False)

    def __post_init__(self):
        v = self.values
        kind = v["problem.kind"].upper()
        if kind not in KINDS:
            raise ConfigError(f"key 'problem.kind': unknown problem kind {v['problem.kind']!r}")
        v["problem.kind"] = kind
        for key in INT_KEYS:
            try:
                int(v[key])
            except ValueError:
                raise ConfigError(f"key {key!r}: expected an integer, got {v[key]!r}") from None
        for key in ("x0", "H", "delta", "gamma", "contour.tau_max", "tol.spread", "tol.manufactured",
                    "grid.T_min", "contour.beta_contour", "data.value", "dn.beta", "dn.mu"):
            self.num(key)
        for key in POSITIVE_KEYS:
            if not self.num(key) > 0:
                raise ConfigError(f"key {key!r} must be positive")
        ls = self.ls
        if any(l < 2 or l != int(l) for l in ls):
            raise ConfigError("key 'weights.l': orders must be integers >= 2")
        for b in self.betas:
            if kind == "MBVP" and not 0.0 <= b <= 2.0:
                raise ConfigError(f"key 'weights.beta': {b} outside [0, 2] for the mixed problem")
            if kind != "MBVP" and not 0.0 < b <= 1.0:
                raise ConfigError(f"key 'weights.beta': {b} outside (0, 1] for {kind}")
        try:
            self.profile = SurfaceProfile(v["eta.kind"], _floats("eta.params", v["eta.params"]),
                                          self.num("gamma"), self.num("x0"), self.num("H"),
                                          self.num("delta"))
        except CornerError as exc:
            raise ConfigError(f"profile: {exc}") from None

    def num(self, key: str) -> float:
        try:
            return float(self.values[key])
        except ValueError:
            raise ConfigError(f"key {key!r}: expected a number, got {self.values[key]!r}") from None

    def int(self, key: str) -> int:
        return int(self.values[key])

    @property
    def kind(self) -> str:
        return self.values["problem.kind"]

    @property
    def ls(self) -> tuple:
        return tuple(int(round(x)) for x in _floats("weights.l", self.values["weights.l"]))

    @property
    def betas(self) -> tuple:
        given = _floats("weights.beta", self.values["weights.beta"])
        if given:
            return given
        return (0.0, 1.0, 2.0) if self.kind == "MBVP" else (0.5, 1.0)

    @property
    def grid(self) -> NormGrid:
        return NormGrid(self.num("grid.T_min"), self.int("grid.n_t"), self.int("grid.n_theta"),
                        self.int("grid.n_x"), self.int("grid.n_z"))

    def echo(self) -> str:
        return "".join(f"# {k} = {self.values[k]}\n" for k in sorted(self.values))


def load_config(path: str | None, seed: int | None = None) -> ExperimentConfig:
    values = dict(DEFAULTS)
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        values.update(parse_config_text(text))
    if seed is not None:
        values["seed"] = str(seed)
    return ExperimentConfig(values)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    wr.writerows(rows)
    return buf.getvalue()


def _fmt(x: float) -> str:
    return f"{x:.12e}"


def _write(out: Path, name: str, cfg: ExperimentConfig, body: str):
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(cfg.echo() + body)


# ---------------------------------------------------------------------------
# commands


def cmd_eigen(cfg: ExperimentConfig, out: Path) -> int:
    pair = KINDS[cfg.kind]
    es = eigensystem(pair, cfg.profile.omega, omega2=cfg.profile.omega2)
    ok, verdict = es.exclusion_verdict()
    rows = [[e.m, f"{e.lam:.15g}", f"{e.lam_numeric:.15g}", es.label, f"{es.omega:.15g}"] for e in es.entries]
    body = _csv(["m", "lambda", "lambda_numeric", "bc_pair", "omega"], rows)
    theorem_range = "[0,2]" if cfg.kind == "MBVP" else "(0,1]"
    wrows = [["verdict", verdict, ""], ["theorem_beta_range", theorem_range, ""]]
    for l in cfg.ls:
        for lo, hi in es.admissible_weight_lines(l):
            wrows.append([f"admissible_l{l}", f"{lo:.15g}", f"{hi:.15g}"])
    _write(out, "eigen.csv", cfg, body)
    _write(out, "weights.csv", cfg, _csv(["record", "value", "upper"], wrows))
    print(verdict)
    return 0 if ok else ToleranceError.exit_code


def _manufactured(kind: str, profile: SurfaceProfile):
    """u = x^2 - z^2 with the boundary data of the problem kind."""
    exact = AnalyticField(lambda x, z: x * x - z * z, lambda x, z: (2 * x, -2 * z))
    top, bottom = KINDS[kind]

    def trace(side, bc):
        def fn(x):
            z = profile.eta(x) if side == "top" else profile.bottom(x)
            if bc == "dirichlet":
                return exact.value(x, z)
            nx, nz, _ = (_top_normal if side == "top" else _bottom_normal)(profile, x)
            gx, gz = exact.gradient(x, z)
            return gx * nx + gz * nz
        return fn

    return ProblemData(f=trace("top", top), g=trace("bottom", bottom)), exact


def _solve_data(cfg: ExperimentConfig):
    did = cfg.values["data.id"]
    kind, profile = cfg.kind, cfg.profile
    if did == "constant":
        if kind == "NVP":
            raise PreconditionError("constant data need a Dirichlet part")
        c = cfg.num("data.value")
        return ProblemData(f=lambda x: c + 0 * x, g=(lambda x: c + 0 * x) if kind == "DVP" else None), \
            AnalyticField(lambda x, z: c, lambda x, z: (0.0, 0.0)), None
    if did == "manufactured":
        data, exact = _manufactured(kind, profile)
        return data, exact, exact.value
    if did == "incompatible":
        from .experiments import smooth_bump
        d = profile.patch_radius
        return ProblemData(f=lambda x: smooth_bump(x, 0.5 * d, 0.3 * d)), None, None
    if did == "family":
        from .experiments import smooth_instance
        return smooth_instance(kind, profile, cfg.int("seed"), cfg.int("data.index")).data, None, None
    raise ConfigError(f"key 'data.id': unknown data descriptor {did!r}")


def cmd_solve(cfg: ExperimentConfig, out: Path) -> int:
    data, exact, far = _solve_data(cfg)
    sol = solve_full(cfg.kind, cfg.profile, data, decompose=False, n_xi=cfg.int("grid.n_xi"),
                     n_s=cfg.int("grid.n_s"), far_field=far)
    X, Z = sol.u.nodes_physical()
    U = sol.u.values
    rows = [[_fmt(x), _fmt(z), _fmt(u)] for x, z, u in zip(X.ravel(), Z.ravel(), U.ravel())]
    norm_rows = []
    for l in cfg.ls:
        for b in cfg.betas:
            w = l - 2 + b if cfg.kind == "MBVP" else l - 1 + b
            n = field_norm(sol.u, cfg.profile, l, w, grid=cfg.grid)
            norm_rows.append([l, f"{b:g}", f"{w:g}", _fmt(n["cone"]), _fmt(n["strip"]), _fmt(n["total"])])
    status = 0
    err_body = None
    if exact is not None:
        ue = exact.value(X, Z)
        scale = float(np.sqrt(np.mean(ue**2)))
        err = float(np.sqrt(np.mean((U - ue) ** 2)))
        rel = err / scale if scale > 0 else err
        passed = rel <= cfg.num("tol.manufactured")
        err_body = _csv(["quantity", "value", "pass"], [["relative_l2_error", _fmt(rel), str(passed).lower()],
                                                         ["max_abs_error", _fmt(float(np.max(np.abs(U - ue)))), ""]])
        status = 0 if passed else ToleranceError.exit_code
    _write(out, "solution.csv", cfg, _csv(["x", "z", "u"], rows))
    _write(out, "norms.csv", cfg, _csv(["l", "beta", "weight", "cone", "strip", "total"], norm_rows))
    if err_body is not None:
        _write(out, "errors.csv", cfg, err_body)
    print(f"solved {cfg.kind}; residual {sol.u.meta['residual']:.2e}")
    return status


def cmd_verify(cfg: ExperimentConfig, out: Path) -> int:
    target = cfg.values["verify.target"]
    size = cfg.int("family.size")
    zero = cfg.values["family.kind"] == "zero"
    max_spread = cfg.num("tol.spread")
    if target == "dn":
        k, beta = cfg.int("dn.k"), cfg.num("dn.beta")
        fam = [lambda r: 0.0 * np.asarray(r)] * size if zero else dn_family(cfg.profile, cfg.int("seed"), size)
        rep = dn_estimate_report(fam, cfg.profile, k, beta, cfg.grid)
        ok = bool(np.isfinite(rep.max_ratio)) and rep.spread < max_spread
        summary = _csv(["k", "beta", "max_ratio", "spread", "pass"],
                       [[k, f"{beta:g}", _fmt(rep.max_ratio), _fmt(rep.spread), str(ok).lower()]])
        _write(out, "report.csv", cfg, rep.to_csv() + summary)
        print(f"dn estimate spread {rep.spread:.3g}: {'PASS' if ok else 'FAIL'}")
        return 0 if ok else ToleranceError.exit_code
    if target != "estimate":
        raise ConfigError(f"key 'verify.target': unknown target {target!r}")
    if size < 10 and not zero:
        raise PreconditionError("estimate sweeps need a family of at least 10 instances")
    settings = SweepSettings(cfg.kind, cfg.profile, cfg.ls, cfg.betas, cfg.int("seed"), size, zero,
                             cfg.grid, cfg.int("grid.n_xi"), cfg.int("grid.n_s"))
    rows = run_sweep(settings, cfg.int("run.parallel"))
    body = _csv(["instance", "l", "beta", "weight", "h_norm", "f_norm", "g_norm", "data_norm", "u_norm",
                 "ratio", "residual"],
                [[r.instance, r.l, f"{r.beta:g}", f"{r.weight:g}", _fmt(r.h_norm), _fmt(r.f_norm),
                  _fmt(r.g_norm), _fmt(r.data_norm), _fmt(r.u_norm), _fmt(r.ratio), f"{r.residual:.3e}"]
                 for r in rows])
    summ = summarize(rows, max_spread)
    body += _csv(["l", "beta", "max_ratio", "spread", "pass"],
                 [[l, f"{b:g}", _fmt(m), _fmt(s), str(ok).lower()] for l, b, m, s, ok in summ])
    _write(out, "report.csv", cfg, body)
    ok = all(s[-1] for s in summ)
    print(f"{len(summ)} weight lines: {'PASS' if ok else 'FAIL'}")
    return 0 if ok else ToleranceError.exit_code


def cmd_dn(cfg: ExperimentConfig, out: Path) -> int:
    """Nf of r^mu cos(mu (theta + omega2)) restricted to the top boundary.

    The far end uses the exact harmonic function, so on straight wedges the
    output can be compared with the closed form.
    """
    mu = cfg.num("dn.mu")
    p = cfg.profile
    w2 = p.omega2

    def exact(x, z):
        return np.hypot(x, z) ** mu * np.cos(mu * (np.arctan2(z, x) + w2))

    inst = dn_apply(lambda r: np.asarray(r) ** mu * np.cos(mu * p.omega), p, t_min=cfg.num("grid.T_min"),
                    far_field=exact, n_xi=cfg.int("grid.n_xi"), n_s=cfg.int("grid.n_s"))
    r = np.exp(inst.Nf.t)
    straight = p.eta_kind == "polynomial" and all(c == 0 for i, c in enumerate(p.eta_params) if i != 1)
    ref = wedge_dn_closed_form(mu, p.omega, r) if straight else np.full(r.shape, np.nan)
    rows = [[_fmt(t), _fmt(rr), _fmt(v), _fmt(v - e) if straight else ""]
            for t, rr, v, e in zip(inst.Nf.t, r, inst.Nf.values, ref)]
    _write(out, "dn.csv", cfg, _csv(["t", "r", "Nf", "error"], rows))
    print(f"Nf on {len(r)} points")
    return 0


COMMANDS = {"eigen": cmd_eigen, "solve": cmd_solve, "verify": cmd_verify, "dn": cmd_dn}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="cornerweights", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", default=None, help="flat key = value configuration file")
    ap.add_argument("--out", default=None, help="output directory (overrides output.path)")
    ap.add_argument("--seed", type=int, default=None, help="seed for randomized families")
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return ConfigError.exit_code if exc.code not in (0, None) else 0
    try:
        cfg = load_config(args.config, args.seed)
        out = Path(args.out or cfg.values["output.path"])
        return COMMANDS[args.command](cfg, out)
    except CornerError as exc:
        print(f"error [{exc.category}]: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
