"""Experiment runner: config parsing, orchestration, CSV/SVG emission.

Subcommands: cap, eig, sweep, expand, radial, check.  Experiments are
described by INI-style config files ([domain], [hole], [operator],
[solver], [experiment]); results land in a CSV with the fixed header

    eps,cap_cond,cap_weighted,lambda_base,lambda_pert,diff,ratio,rate_running,solver_iters

plus an optional log-log SVG and a summary block on stdout ending with
PASS or FAIL.  Exit codes: 0 success, 1 failed checks, 2 config errors,
3 solver failures.
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import (Ball, BoundingBox, BoxRegion, Ellipsoid, EmptyRegion,
                   NodeMask, RegionSpec, build_grid, rasterize, scale_region)
from .operator import BCKind, GridFunction, assemble_form, mass_weights
from .capacity import condenser_capacity, weighted_capacity
from .spectrum import solve_eigs
from . import radial
from .asymptotics import (DEFAULT_EPS_GRID, DEFAULT_EPS_RADIAL, DEFAULT_RADII,
                          ExpansionSetting, RateFit, expansion_report, fit_rate)
from .checks import run_property_suite
from .solvers import SolverError

CSV_HEADER = ("eps,cap_cond,cap_weighted,lambda_base,lambda_pert,diff,"
              "ratio,rate_running,solver_iters")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_SOLVER_ERROR = 3


class ConfigError(ValueError):
    pass


@dataclass
class SweepRow:
    """One line of the sweep CSV."""

    eps: float
    cap_cond: float = math.nan
    cap_weighted: float = math.nan
    lambda_base: float = math.nan
    lambda_pert: float = math.nan
    diff: float = math.nan
    ratio: float = math.nan
    rate_running: float = math.nan
    solver_iters: int = 0

    def csv(self) -> str:
        floats = [self.eps, self.cap_cond, self.cap_weighted,
                  self.lambda_base, self.lambda_pert, self.diff, self.ratio,
                  self.rate_running]
        return ",".join(f"{x:.17g}" for x in floats) + f",{self.solver_iters}"


def parse_rows(text: str) -> list[SweepRow]:
    """Inverse of the CSV writer (used by round-trip tests and plotting)."""
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise ConfigError("unexpected CSV header")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        rows.append(SweepRow(*[float(p) for p in parts[:8]], int(parts[8])))
    return rows


@dataclass
class ExperimentConfig:
    kind: str
    name: str
    N: int
    domain: RegionSpec
    box_margin: float
    resolution: int
    hole: RegionSpec
    eps_values: tuple
    m: int
    bc: BCKind
    J: int
    ell: int
    count: int
    path: str
    resolutions: tuple
    gamma_max: int
    rate_tol: float
    coef_tol: float
    ratio_tol: float
    radii: tuple
    cg_tol: float
    eig_tol: float
    threads: int
    seed: int


def _floats(text: str) -> list[float]:
    return [float(tok) for tok in text.replace(",", " ").split()]


def _region_from_section(sec, N: int) -> RegionSpec:
    kind = sec.get("kind", "ball").strip().lower()
    if kind == "empty" or (kind == "ball" and sec.getfloat("radius", 1.0) < 0):
        return EmptyRegion(N)
    if kind == "ball":
        center = _floats(sec.get("center", " ".join(["0"] * N)))
        return Ball(center, sec.getfloat("radius", 1.0))
    if kind == "box":
        return BoxRegion(_floats(sec["lo"]), _floats(sec["hi"]))
    if kind == "ellipsoid":
        center = _floats(sec.get("center", " ".join(["0"] * N)))
        return Ellipsoid(center, _floats(sec["semiaxes"]))
    raise ConfigError(f"unknown region kind '{kind}'")


def parse_config(path: str | Path) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        read = parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    if not read:
        raise ConfigError(f"config file not found: {path}")
    try:
        exp = parser["experiment"]
        dom = parser["domain"] if parser.has_section("domain") else {}
        hole = parser["hole"] if parser.has_section("hole") else {}
        op = parser["operator"] if parser.has_section("operator") else {}
        sol = parser["solver"] if parser.has_section("solver") else {}

        kind = exp.get("kind", "").strip().lower()
        if kind not in ("cap", "eig", "sweep", "expand", "radial", "check"):
            raise ConfigError(f"unknown experiment kind '{kind}'")
        N = int(dom.get("dimension", 3)) if dom else 3
        path_kind = exp.get("path", "radial" if kind == "radial" else "grid")

        eps_text = hole.get("eps", "") if hole else ""
        if eps_text:
            eps_values = tuple(_floats(eps_text))
        elif path_kind == "radial" or kind == "radial":
            eps_values = DEFAULT_EPS_RADIAL
        else:
            eps_values = DEFAULT_EPS_GRID
        if list(eps_values) != sorted(eps_values, reverse=True):
            raise ConfigError("eps list must be strictly decreasing")
        if len(set(eps_values)) != len(eps_values):
            raise ConfigError("eps list must be strictly decreasing")

        J = int(exp.get("J", 1))
        if J < 1:
            raise ConfigError("target index J must be >= 1")

        domain = (_region_from_section(dom, N) if dom
                  else Ball(np.zeros(N), 1.0))
        hole_region = (_region_from_section(hole, N) if hole
                       else Ball(np.zeros(N), 1.0))
        res_text = exp.get("resolutions", "")
        resolutions = tuple(int(x) for x in _floats(res_text)) if res_text \
            else (33, 65)

        return ExperimentConfig(
            kind=kind,
            name=exp.get("name", kind),
            N=N,
            domain=domain,
            box_margin=float(dom.get("box_margin", 1.05)) if dom else 1.05,
            resolution=int(dom.get("resolution", 33)) if dom else 33,
            hole=hole_region,
            eps_values=eps_values,
            m=int(op.get("m", 1)) if op else 1,
            bc=BCKind(op.get("bc", "dirichlet")) if op else BCKind.dirichlet,
            J=J,
            ell=int(exp.get("ell", 0)),
            count=int(exp.get("count", 4)),
            path=path_kind,
            resolutions=resolutions,
            gamma_max=int(exp.get("gamma_max", 4)),
            rate_tol=float(exp.get("rate_tol", 0.05 if path_kind == "radial"
                                   else 0.1)),
            coef_tol=float(exp.get("coef_tol", 0.10 if path_kind == "radial"
                                   else 0.15)),
            ratio_tol=float(exp.get("ratio_tol", 0.10)),
            radii=tuple(_floats(exp.get("radii", ""))) or DEFAULT_RADII,
            cg_tol=float(sol.get("cg_tol", 1e-10)) if sol else 1e-10,
            eig_tol=float(sol.get("eig_tol", 1e-9)) if sol else 1e-9,
            threads=int(sol.get("threads", 1)) if sol else 1,
            seed=int(sol.get("seed", 42)) if sol else 42,
        )
    except ConfigError:
        raise
    except (KeyError, ValueError, configparser.Error) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


# ---------------------------------------------------------------------------
# Experiment drivers
# ---------------------------------------------------------------------------

def _grid_setup(cfg: ExperimentConfig):
    lo, hi = cfg.domain.bounds()
    span = np.maximum(np.abs(lo), np.abs(hi)) * cfg.box_margin
    box = BoundingBox(-span, span)
    grid = build_grid(box, cfg.resolution)
    omega = rasterize(grid, cfg.domain)
    form = assemble_form(grid, omega, cfg.m, cfg.bc)
    return grid, omega, form


def _with_running_rate(rows: list[SweepRow]) -> list[SweepRow]:
    pts = []
    for row in rows:
        series = row.diff if not math.isnan(row.diff) else row.cap_weighted
        if not math.isnan(series) and series > 0:
            pts.append((row.eps, series))
        if len(pts) >= 2:
            x = np.log([p[0] for p in pts])
            y = np.log([p[1] for p in pts])
            row.rate_running = float(np.polyfit(x, y, 1)[0])
    return rows


def _run_cap(cfg: ExperimentConfig, out: dict) -> list[SweepRow]:
    grid, omega, form = _grid_setup(cfg)
    rows = []
    for eps in cfg.eps_values:
        hole = rasterize(grid, scale_region(cfg.hole, eps)) \
            if not cfg.hole.is_empty() else rasterize(grid, cfg.hole)
        hole = NodeMask(grid, hole.membership & omega.membership, hole.clipped)
        res = condenser_capacity(form, hole, tol=cfg.cg_tol)
        rows.append(SweepRow(eps, cap_cond=res.value,
                             solver_iters=res.iterations))
        out.setdefault("potentials", []).append((eps, res.potential))
    out["form"] = form
    return _with_running_rate(rows)


def _run_eig(cfg: ExperimentConfig, out: dict) -> list[SweepRow]:
    grid, omega, form = _grid_setup(cfg)
    mass = mass_weights(form)
    base = solve_eigs(form, mass, None, J=cfg.J, tol=cfg.eig_tol,
                      seed=cfg.seed)
    lam0 = float(base.eigenvalues[cfg.J - 1])
    rows = []
    for eps in cfg.eps_values:
        hole = rasterize(grid, scale_region(cfg.hole, eps))
        hole = NodeMask(grid, hole.membership & omega.membership, hole.clipped)
        pert = solve_eigs(form, mass, hole, J=cfg.J, tol=cfg.eig_tol,
                          seed=cfg.seed)
        lam = float(pert.eigenvalues[cfg.J - 1])
        rows.append(SweepRow(eps, lambda_base=lam0, lambda_pert=lam,
                             diff=lam - lam0))
    out["form"] = form
    return _with_running_rate(rows)


def _sweep_point_grid(cfg, grid, omega, form, mass, lam0, u, eps):
    hole = rasterize(grid, scale_region(cfg.hole, eps))
    hole = NodeMask(grid, hole.membership & omega.membership, hole.clipped)
    capw = weighted_capacity(form, hole, u, tol=cfg.cg_tol)
    capc = condenser_capacity(form, hole, tol=cfg.cg_tol)
    pert = solve_eigs(form, mass, hole, J=cfg.J, tol=cfg.eig_tol,
                      seed=cfg.seed)
    lam = float(pert.eigenvalues[cfg.J - 1])
    diff = lam - lam0
    ratio = diff / capw.value if capw.value > 0 else math.nan
    return SweepRow(eps, capc.value, capw.value, lam0, lam, diff, ratio,
                    solver_iters=capw.iterations + capc.iterations)


def _run_sweep(cfg: ExperimentConfig, out: dict) -> list[SweepRow]:
    grid, omega, form = _grid_setup(cfg)
    mass = mass_weights(form)
    base = solve_eigs(form, mass, None, J=cfg.J, tol=cfg.eig_tol,
                      seed=cfg.seed)
    lam0 = float(base.eigenvalues[cfg.J - 1])
    u = base.eigenvectors[cfg.J - 1]
    worker = lambda eps: _sweep_point_grid(cfg, grid, omega, form, mass,
                                           lam0, u, eps)
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            rows = list(pool.map(worker, cfg.eps_values))
    else:
        rows = [worker(eps) for eps in cfg.eps_values]
    out["form"] = form
    out["potential_u"] = u
    return _with_running_rate(rows)


def _run_radial(cfg: ExperimentConfig, out: dict) -> list[SweepRow]:
    if not isinstance(cfg.hole, Ball) or not np.allclose(cfg.hole.center, 0):
        raise ConfigError("radial experiments need an origin-centered ball hole")
    mode = radial.ball_modes(cfg.m, cfg.N, cfg.ell, cfg.bc, cfg.J)[cfg.J - 1]
    lam0 = mode.eigenvalue

    def worker(eps):
        a = eps * cfg.hole.radius
        v = float(mode.value(np.array([a]))[0])
        s = float(mode.derivative(np.array([a]))[0])
        capw = radial.annulus_capacity_general(
            cfg.m, cfg.N, cfg.ell, a, 1.0, v, s, cfg.bc,
            angular_norm=None if cfg.ell == 0 else 1.0).value
        capc = radial.annulus_capacity_general(
            cfg.m, cfg.N, 0, a, 1.0, 1.0, 0.0, cfg.bc).value
        res = radial.radial_eigs(
            radial.RadialProblem(cfg.N, cfg.m, cfg.ell, a, cfg.bc), cfg.J)
        lam = float(res.eigenvalues[cfg.J - 1])
        diff = lam - lam0
        ratio = diff / capw if capw > 0 else math.nan
        return SweepRow(eps, capc, capw, lam0, lam, diff, ratio,
                        solver_iters=res.mesh_size)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            rows = list(pool.map(worker, cfg.eps_values))
    else:
        rows = [worker(eps) for eps in cfg.eps_values]
    return _with_running_rate(rows)


def _run_expand(cfg: ExperimentConfig, out: dict) -> list[SweepRow]:
    setting = ExpansionSetting(
        path=cfg.path, m=cfg.m, N=cfg.N, bc=cfg.bc, ell=cfg.ell, J=cfg.J,
        eps_values=cfg.eps_values, hole_shape=cfg.hole,
        gamma_max=cfg.gamma_max, rate_tol=cfg.rate_tol,
        coef_tol=cfg.coef_tol, ratio_tol=cfg.ratio_tol, radii=cfg.radii,
        resolutions=cfg.resolutions, eig_tol=cfg.eig_tol, cg_tol=cfg.cg_tol,
        seed=cfg.seed)
    report = expansion_report(setting)
    out["report"] = report
    rows = []
    for p in report.sweep:
        rows.append(SweepRow(p.eps, p.cap_cond, p.cap_weighted,
                             report.lambda_base, p.lambda_pert, p.diff,
                             p.ratio, solver_iters=p.solver_iters))
    return _with_running_rate(rows)


# ---------------------------------------------------------------------------
# Output emission
# ---------------------------------------------------------------------------

def write_csv(rows: list[SweepRow], path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(row.csv() + "\n")


def emit_plot(rows: list[SweepRow], fit: RateFit | None, path: Path):
    """Log-log scatter of (eps, diff) and (eps, cap_weighted) with the
    fitted line; nonpositive values are dropped and noted."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    usable = [r for r in rows
              if (not math.isnan(r.diff) and r.diff > 0)
              or (not math.isnan(r.cap_weighted) and r.cap_weighted > 0)]
    if len(usable) < 2:
        raise ValueError("need at least 2 rows with positive values to plot")
    dropped = len(rows) - len(usable)
    fig, ax = plt.subplots(figsize=(5.4, 4.2))
    eps_d = [r.eps for r in usable if r.diff > 0]
    val_d = [r.diff for r in usable if r.diff > 0]
    eps_c = [r.eps for r in usable if r.cap_weighted > 0]
    val_c = [r.cap_weighted for r in usable if r.cap_weighted > 0]
    if eps_d:
        ax.loglog(eps_d, val_d, "o", label="eigenvalue variation")
    if eps_c:
        ax.loglog(eps_c, val_c, "s", mfc="none", label="weighted capacity")
    if fit is not None and eps_d:
        xs = np.array(sorted(eps_d))
        ax.loglog(xs, fit.coefficient * xs**fit.rate, "-",
                  label=f"fit, slope {fit.rate:.4f}")
    if dropped:
        ax.plot([], [], " ", label=f"{dropped} nonpositive row(s) dropped")
    ax.set_xlabel("eps")
    ax.set_ylabel("value")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)


def _dump_matrix(form, path: Path):
    coo = form.S.tocoo()
    with open(path, "w") as fh:
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i} {j} {v:.17g}\n")


def _dump_potential(grid, gf, path: Path):
    coords = grid.coords()
    with open(path, "w") as fh:
        for k in range(grid.node_count):
            pos = " ".join(f"{c:.17g}" for c in coords[k])
            fh.write(f"{pos} {gf.values[k]:.17g}\n")


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------

_DRIVERS = {
    "cap": _run_cap,
    "eig": _run_eig,
    "sweep": _run_sweep,
    "radial": _run_radial,
    "expand": _run_expand,
}


def run(cfg: ExperimentConfig, out_dir: str | Path = "out",
        dump_matrix: bool = False, dump_potential: bool = False,
        make_plot: bool = True) -> int:
    out_dir = Path(os.environ.get("POLYCAP_OUT", str(out_dir)))
    print(f"experiment {cfg.kind} '{cfg.name}'")

    if cfg.kind == "check":
        outcomes = run_property_suite(seed=cfg.seed)
        for oc in outcomes:
            print(repr(oc))
        write_csv([], out_dir / f"{cfg.name}.csv")
        failed = [oc.name for oc in outcomes if not oc.passed]
        if failed:
            print("FAIL: " + ", ".join(failed))
            return EXIT_CHECK_FAILED
        print("PASS")
        return EXIT_OK

    extras: dict = {}
    try:
        rows = _DRIVERS[cfg.kind](cfg, extras)
    except SolverError as exc:
        print(f"solver failure: {exc}")
        print("FAIL: solver")
        return EXIT_SOLVER_ERROR

    csv_path = out_dir / f"{cfg.name}.csv"
    write_csv(rows, csv_path)
    print(f"wrote {csv_path}")

    if dump_matrix and "form" in extras:
        _dump_matrix(extras["form"], out_dir / f"{cfg.name}_matrix.txt")
    if dump_potential:
        for eps, pot in extras.get("potentials", []):
            if isinstance(pot, GridFunction):
                _dump_potential(pot.grid, pot,
                                out_dir / f"{cfg.name}_potential_{eps:g}.txt")

    failed_names: list[str] = []
    if cfg.kind == "expand":
        report = extras["report"]
        print(report.summary())
        failed_names = [c.name for c in report.checks if not c.passed]
        if make_plot:
            try:
                emit_plot(rows, report.rate_fit, out_dir / f"{cfg.name}.svg")
            except ValueError:
                pass
    elif cfg.kind in ("sweep", "radial") and make_plot:
        try:
            pts = [(r.eps, r.diff) for r in rows if r.diff > 0]
            fit = fit_rate(pts) if len(pts) >= 4 else None
            emit_plot(rows, fit, out_dir / f"{cfg.name}.svg")
        except (ValueError, SolverError):
            pass

    if failed_names:
        print("FAIL: " + ", ".join(failed_names))
        return EXIT_CHECK_FAILED
    print("PASS")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="polycap",
        description="higher-order capacities and small-hole eigenvalue "
                    "asymptotics")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("cap", "eig", "sweep", "expand", "radial", "check"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None,
                       help="experiment config file (INI)")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--dump-matrix", action="store_true")
        p.add_argument("--dump-potential", action="store_true")
        p.add_argument("--no-plot", action="store_true")
    args = parser.parse_args(argv)

    try:
        if args.config is not None:
            cfg = parse_config(args.config)
            if cfg.kind != args.command:
                cfg = _replace_kind(cfg, args.command)
        else:
            cfg = _default_config(args.command)
        if args.threads is not None:
            cfg.threads = args.threads
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    try:
        return run(cfg, out_dir=args.out, dump_matrix=args.dump_matrix,
                   dump_potential=args.dump_potential,
                   make_plot=not args.no_plot)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER_ERROR


def _replace_kind(cfg: ExperimentConfig, kind: str) -> ExperimentConfig:
    from dataclasses import replace

    return replace(cfg, kind=kind)


def _default_config(kind: str) -> ExperimentConfig:
    if kind == "check":
        return ExperimentConfig(
            kind="check", name="check", N=2, domain=Ball([0, 0], 1.0),
            box_margin=1.05, resolution=25, hole=Ball([0, 0], 0.3),
            eps_values=(1.0,), m=1, bc=BCKind.dirichlet, J=1, ell=0,
            count=4, path="grid", resolutions=(25, 49), gamma_max=4,
            rate_tol=0.1, coef_tol=0.15, ratio_tol=0.1, radii=DEFAULT_RADII,
            cg_tol=1e-10, eig_tol=1e-9, threads=1, seed=42)
    raise ConfigError(f"experiment '{kind}' requires --config")


if __name__ == "__main__":
    sys.exit(main())
