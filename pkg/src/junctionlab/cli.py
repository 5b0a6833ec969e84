"""Batch front end: ``junctionlab <command> --config run.cfg [--out DIR]``.

Exit codes: 0 success, 1 configuration error (nothing written),
2 solver non-convergence or failed check, 3 failed convergence rows.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import plotting
from .analysis import (
    energy_eps,
    energy_limit,
    identity_check,
    run_convergence,
    write_report_csv,
)
from .config import ConfigError, RunConfig, load_config
from .eps_problem import assemble_eps, solve
from .expressions import Expression
from .geometry import MeshError, build_junction_mesh, build_limit_mesh, write_mesh_csv
from .limit_problem import assemble_limit, check_minty, oracle_1d, solve_limit
from .problem_data import validate
from .vi_solver import check_definitions_equivalence, kkt_residual

log = logging.getLogger("junctionlab")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_ROWS = 0, 1, 2, 3


def _fmt(x: float) -> str:
    return f"{x:.11e}"


def _err(msg: str):
    print(f"error: {msg}", file=sys.stderr)


def _check_data(cfg: RunConfig, junction):
    bad = validate(cfg.data, junction)
    if bad:
        raise ConfigError("data violates admissibility: " + "; ".join(str(v) for v in bad))


def _write_solution_csv(path: Path, mesh, vi, res, u_full):
    mu_node = {}
    act = set(vi.system.free[res.active_set].tolist())
    for i, m in zip(vi.system.free[vi.index], res.mu):
        mu_node[int(i)] = m
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "x1", "x2", "u", "mu", "active"])
        for i, (x, y) in enumerate(mesh.nodes):
            mu = _fmt(mu_node[i]) if i in mu_node else ""
            w.writerow([i, _fmt(x), _fmt(y), _fmt(u_full[i]), mu, int(i in act)])


def _write_report(path: Path, lines: dict):
    with open(path, "w") as fh:
        for k, v in lines.items():
            fh.write(f"{k} = {_fmt(v) if isinstance(v, float) else v}\n")


def cmd_solve_eps(cfg: RunConfig, out: Path) -> int:
    junction = cfg.junction()
    _check_data(cfg, junction)
    mesh = build_junction_mesh(junction)
    vi = assemble_eps(mesh, cfg.data)
    res = solve(vi, cfg.method, **cfg.solver_options())
    u = vi.system.expand(res.u)
    kkt = kkt_residual(vi, res.u)
    eq = check_definitions_equivalence(vi, res, cfg.run["trials"])
    out.mkdir(parents=True, exist_ok=True)
    write_mesh_csv(mesh, out)
    _write_solution_csv(out / "solution.csv", mesh, vi, res, u)
    E = energy_eps(u, mesh, vi.system.A)
    _write_report(out / "kkt.txt", {
        "method": res.method, "converged": res.converged, "iterations": res.iterations,
        "feasibility": kkt.feasibility, "sign": kkt.sign, "complementarity": kkt.complementarity,
        "stationarity": kkt.stationarity, "identity_relative": eq.equality_relative,
        "inequality_violation": eq.worst_inequality, "E_eps": E, "n_active": len(res.active_set),
    })
    if cfg.run["plots"]:
        plotting.plot_solution(mesh, u, out / "solution.png", title=rf"$u_\varepsilon$, N={junction.N}")
    print(f"E_eps = {_fmt(E)}")
    print(f"kkt: feasibility={kkt.feasibility:.3e} sign={kkt.sign:.3e} complementarity={kkt.complementarity:.3e} stationarity={kkt.stationarity:.3e}")
    if not res.converged:
        _err(f"{res.method} did not converge in {res.iterations} iterations")
        return EXIT_SOLVER
    return EXIT_OK


def cmd_solve_limit(cfg: RunConfig, out: Path) -> int:
    junction = cfg.junction()
    _check_data(cfg, junction)
    mesh = build_limit_mesh(junction)
    vi = assemble_limit(mesh, cfg.data)
    sol = solve_limit(vi, cfg.method, check_trials=cfg.run["trials"], **cfg.solver_options())
    E0 = energy_limit(sol)
    out.mkdir(parents=True, exist_ok=True)
    write_mesh_csv(mesh, out, prefix="limit_")
    act = np.zeros(mesh.n_nodes, dtype=int)
    act[vi.system.free[sol.result.active_set]] = 1
    with open(out / "limit_solution.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "region", "u", "active"])
        for i, (x, y) in enumerate(mesh.nodes):
            region = "interface" if y == 0.0 else ("d0" if y < 0.0 else "body")
            w.writerow([i, region, _fmt(sol.u[i]), act[i]])
    minty = check_minty(vi, sol.result.u, cfg.run["trials"])
    report = {"method": sol.result.method, "converged": sol.converged, "iterations": sol.result.iterations, "E_0": E0,
              "minty_violation": minty, "kkt": kkt_residual(vi, sol.result.u).max()}
    if sol.definition_check is not None:
        report["identity_relative"] = sol.definition_check.equality_relative
    _write_report(out / "limit_kkt.txt", report)
    if cfg.run["plots"]:
        plotting.plot_solution(mesh, sol.u, out / "limit_solution.png", title=r"$u_0$")
    print(f"E_0 = {_fmt(E0)}")
    if not sol.converged:
        _err("limit solve did not converge")
        return EXIT_SOLVER
    return EXIT_OK


def cmd_converge(cfg: RunConfig, out: Path) -> int:
    N_list = cfg.run.get("N_list")
    if not N_list or len(N_list) < 2:
        raise ConfigError("converge needs run.N_list with at least two entries")
    template = cfg.junction(N_list[0])
    for N in N_list:
        cfg.junction(N)
    _check_data(cfg, template)
    report = run_convergence(template, N_list, cfg.data, cfg.run.get("psi_list"), cfg.method,
                             cfg.run["limit_refine"], cfg.solver_options())
    write_report_csv(report, out / "report.csv")
    if cfg.run["plots"]:
        plotting.plot_convergence(report, out / "report.png")
    for r in report.rows:
        print(f"N={r.N:4d} eps={r.eps:.4e} E_eps={r.E_eps:.10g} E_0={r.E_0:.10g} gap={r.energy_gap:.4e}")
    if report.failed:
        _err("at least one convergence row failed")
        return EXIT_ROWS
    return EXIT_OK


def cmd_identity_check(cfg: RunConfig, out: Path) -> int:
    del out
    v_list = cfg.run.get("v_list")
    if not v_list:
        raise ConfigError("identity-check needs run.v_list")
    mesh = build_junction_mesh(cfg.junction())
    thr = cfg.run["threshold"]
    ok = True
    print("v,lhs,rhs,discrepancy")
    for v in v_list:
        r = identity_check(mesh, v)
        ok &= r.discrepancy <= thr
        print(f"{v},{_fmt(r.lhs)},{_fmt(r.rhs)},{_fmt(r.discrepancy)}")
    return EXIT_OK if ok else EXIT_SOLVER


def _grid_spacing(mesh) -> float:
    x = mesh.nodes[mesh.elements]
    edges = np.linalg.norm(np.roll(x, -1, axis=1) - x, axis=2)
    return float(edges.max())


def cmd_oracle_compare(cfg: RunConfig, out: Path) -> int:
    junction = cfg.junction()
    data = cfg.data
    gamma = junction.gamma
    if not data.x1_independent() or (isinstance(gamma, Expression) and gamma.depends_on("x1")):
        raise ConfigError("oracle-compare needs x1-independent f, g, d and constant gamma")
    _check_data(cfg, junction)
    mesh = build_limit_mesh(junction)
    vi = assemble_limit(mesh, data)
    sol = solve_limit(vi, cfg.method, check_trials=0, **cfg.solver_options())
    k = cfg.run["oracle_refine"]
    height = float(junction.gamma_at(0.0))
    g1 = data.g if data.constrained else None
    orc = oracle_1d(height, junction.l, junction.h, data.f, data.d, g1, m=k * junction.ny_rod, m_body=k * junction.ny_body)
    x2 = mesh.nodes[:, 1]
    u_or = np.interp(x2, orc.x2, orc.u)
    dev = float(np.abs(sol.u - u_or).max())
    hmax = _grid_spacing(mesh)
    thr = 5.0 * hmax**2 * (1.0 + float(np.abs(orc.u).max()))
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "oracle.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x2", "u"])
        for a, b in zip(orc.x2, orc.u):
            w.writerow([_fmt(a), _fmt(b)])
    if cfg.run["plots"]:
        col = mesh.grid.node_at[0]
        plotting.plot_profiles(orc.x2, orc.u, mesh.nodes[col, 1], sol.u[col], out / "oracle.png", junction.h)
    print(f"max deviation = {_fmt(dev)}  threshold = {_fmt(thr)}  E_0(2D) = {_fmt(energy_limit(sol))}  E_0(1D) = {_fmt(orc.energy)}")
    if not sol.converged or not orc.result.converged:
        _err("a solve did not converge")
        return EXIT_SOLVER
    return EXIT_OK if dev <= thr else EXIT_SOLVER


COMMANDS = {
    "solve-eps": cmd_solve_eps,
    "solve-limit": cmd_solve_limit,
    "converge": cmd_converge,
    "identity-check": cmd_identity_check,
    "oracle-compare": cmd_oracle_compare,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="junctionlab", description="Signorini problem in a thick junction and its homogenized limit")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="run configuration file")
        sp.add_argument("--out", default=None, help="output directory (overrides run.output_dir)")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # usage errors are configuration errors; --help exits 0
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        out = Path(args.out if args.out is not None else cfg.run["output_dir"])
        return COMMANDS[args.command](cfg, out)
    except (ConfigError, MeshError) as exc:
        _err(str(exc))
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
