"""Energies, weak-convergence gaps, the rod integral identity and the eps -> 0 study."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import (
    FULL,
    apply_dirichlet,
    assemble_mass,
    assemble_stiffness,
    edge_quadrature,
    element_quadrature,
)
from .eps_problem import assemble_eps, solve
from .expressions import Expression, parse_expression
from .geometry import (
    BODY,
    D0,
    ROD,
    S_EPS,
    JunctionConfig,
    Mesh,
    build_junction_mesh,
    build_limit_mesh,
    interpolate,
)
from .limit_problem import LimitSolution, assemble_limit, solve_limit
from .problem_data import ProblemData
from .vi_solver import check_definitions_equivalence, kkt_residual

log = logging.getLogger(__name__)

FD_STEP = 1e-6


def energy_eps(u: np.ndarray, mesh: Mesh, A=None) -> float:
    """Discrete int_{Omega_eps} |grad u|^2 (same quadrature as assembly)."""
    if A is None:
        A = assemble_stiffness(mesh, FULL)
    return float(u @ (A @ u))


def energy_limit(solution: LimitSolution) -> float:
    return float(solution.u @ (solution.vi.system.A @ solution.u))


# ------------------------------------------------------------ identity


def periodic_corrector(xi):
    """Y(xi) = -xi + [xi] + 1/2."""
    return -xi + np.floor(xi) + 0.5


def _x1_derivative(v: Expression, x1, x2, derivative: str):
    if derivative == "ad":
        return v.gradient_component(x1, x2, "x1")
    step = FD_STEP * (1.0 + np.abs(x1))
    return (v(x1 + step, x2) - v(x1 - step, x2)) / (2.0 * step)


@dataclass
class IdentityResult:
    lhs: float
    rhs: float
    discrepancy: float
    volume_term: float
    corrector_term: float


def identity_check(mesh: Mesh, v, derivative: str = "ad", order: int = 2) -> IdentityResult:
    """Both sides of  (eps h / 2) int_S v dx2 = int_G v dx - eps int_G Y(x1/eps) d1 v dx.

    ``derivative`` is ``"ad"`` (exact forward-mode) or ``"fd"`` (central
    differences with step 1e-6 (1 + |x1|)).
    """
    if isinstance(v, str):
        v = parse_expression(v)
    cfg = mesh.config
    eps, h = cfg.eps, cfg.h
    pts, wts, _, _ = edge_quadrature(mesh, S_EPS, order)
    lhs = 0.5 * eps * h * math.fsum((wts * v(pts[..., 0], pts[..., 1])).ravel())
    rods = np.flatnonzero(mesh.regions == ROD)
    q = element_quadrature(mesh, order, rods)
    x1, x2 = q.points[..., 0], q.points[..., 1]
    vol = math.fsum((q.weights * v(x1, x2)).ravel())
    dv = _x1_derivative(v, x1, x2, derivative)
    corr = eps * math.fsum((q.weights * periodic_corrector(x1 / eps) * dv).ravel())
    rhs = vol - corr
    return IdentityResult(lhs, rhs, abs(lhs - rhs), vol, corr)


# ------------------------------------------------------------ weak gaps


def default_test_functions(a: float, l: float) -> list[Expression]:
    texts = ["1", "x1", "x2", "x1*x2", f"sin(pi*x1/{a!r})", f"cos(pi*x2/(2*{l!r}))"]
    return [parse_expression(t) for t in texts]


@dataclass
class GapTable:
    test_functions: list[str]
    eps_integrals: list[float]
    limit_integrals: list[float]
    weak_gaps: list[float]
    deriv_gaps: list[float]
    body_l2_gap: float
    trace_gap: float


def _same_geometry(c1: JunctionConfig, c2: JunctionConfig) -> bool:
    if not all(math.isclose(getattr(c1, k), getattr(c2, k), rel_tol=1e-12) for k in ("a", "l", "h")):
        return False
    x = np.linspace(0.0, c1.a, 257)
    return bool(np.allclose(c1.gamma_at(x), c2.gamma_at(x), rtol=1e-12, atol=0.0))


def weak_gaps(u_eps: np.ndarray, eps_mesh: Mesh, limit: LimitSolution, test_functions=None) -> GapTable:
    lmesh = limit.mesh
    if not _same_geometry(eps_mesh.config, lmesh.config):
        raise ValueError("eps mesh and limit mesh come from different geometries")
    cfg = eps_mesh.config
    if test_functions is None:
        test_functions = default_test_functions(cfg.a, cfg.l)
    test_functions = [parse_expression(t) if isinstance(t, str) else t for t in test_functions]
    h = cfg.h

    rods = np.flatnonzero(eps_mesh.regions == ROD)
    qe = element_quadrature(eps_mesh, 2, rods)
    ue = u_eps[eps_mesh.elements[rods]]
    u_q = np.einsum("qa,ma->mq", qe.shape, ue)
    d1u_q = np.einsum("mqa,ma->mq", qe.grads[..., 0], ue)
    d0 = np.flatnonzero(lmesh.regions == D0)
    ql = element_quadrature(lmesh, 2, d0)
    u0_q = np.einsum("qa,ma->mq", ql.shape, limit.u[lmesh.elements[d0]])

    eps_int, lim_int, wg, dg = [], [], [], []
    for psi in test_functions:
        pe = psi(qe.points[..., 0], qe.points[..., 1])
        pl = psi(ql.points[..., 0], ql.points[..., 1])
        ie = math.fsum((qe.weights * u_q * pe).ravel())
        il = h * math.fsum((ql.weights * u0_q * pl).ravel())
        eps_int.append(ie)
        lim_int.append(il)
        wg.append(abs(ie - il))
        dg.append(abs(math.fsum((qe.weights * d1u_q * pe).ravel())))

    # body: nodal interpolation of u0+ onto the eps-mesh body nodes
    body = np.flatnonzero(eps_mesh.regions == BODY)
    bnodes = np.unique(eps_mesh.elements[body])
    u0_on_eps = np.zeros(eps_mesh.n_nodes)
    u0_on_eps[bnodes] = interpolate(lmesh, limit.u, eps_mesh.nodes[bnodes])
    diff = u_eps - u0_on_eps
    qb = element_quadrature(eps_mesh, 2, body)
    dq = np.einsum("qa,ma->mq", qb.shape, diff[eps_mesh.elements[body]])
    body_l2 = math.sqrt(max(0.0, math.fsum((qb.weights * dq * dq).ravel())))

    # trace on x2 = 0: piecewise linear in x1 between interface nodes
    g = eps_mesh.grid
    iface = g.node_at[:, g.n_rod_rows]
    x = eps_mesh.nodes[iface, 0]
    dn = diff[iface]
    L = np.diff(x)
    gx, gw = np.polynomial.legendre.leggauss(2)
    t = 0.5 * (gx + 1.0)
    vals = dn[:-1, None] * (1 - t)[None, :] + dn[1:, None] * t[None, :]
    trace = math.sqrt(max(0.0, math.fsum((0.5 * L[:, None] * gw[None, :] * vals**2).ravel())))

    return GapTable([p.text for p in test_functions], eps_int, lim_int, wg, dg, body_l2, trace)


# ------------------------------------------------------------ Friedrich


@dataclass
class FriedrichEstimate:
    C2: float
    eigenvalue: float
    iterations: int
    converged: bool


def friedrich_constant(mesh: Mesh, dirichlet_tags, shift: float = 0.0, tol: float = 1e-8, max_iter: int = 500, seed: int = 0) -> FriedrichEstimate:
    """C2 = 1/sqrt(lambda_min) of  K x = lambda M x  by shifted inverse iteration."""
    if isinstance(dirichlet_tags, str):
        dirichlet_tags = (dirichlet_tags,)
    K = assemble_stiffness(mesh, FULL)
    M = assemble_mass(mesh)
    sysK = apply_dirichlet(K, np.zeros(mesh.n_nodes), mesh, dirichlet_tags)
    free = sysK.free
    Kr = sysK.A_red
    Mr = M[free][:, free].tocsr()
    lu = spla.splu((Kr - shift * Mr).tocsc())
    rng = np.random.default_rng(seed)
    x = np.abs(rng.standard_normal(len(free))) + 1.0
    x /= math.sqrt(x @ (Mr @ x))
    lam_old = math.inf
    lam = math.inf
    for it in range(1, max_iter + 1):
        y = lu.solve(Mr @ x)
        y /= math.sqrt(y @ (Mr @ y))
        lam = float(y @ (Kr @ y))
        x = y
        if abs(lam - lam_old) <= tol * abs(lam):
            return FriedrichEstimate(1.0 / math.sqrt(lam), lam, it, True)
        lam_old = lam
    log.warning("inverse iteration stagnated after %d steps", max_iter)
    return FriedrichEstimate(1.0 / math.sqrt(lam), lam, max_iter, False)


# ------------------------------------------------------------ convergence


@dataclass
class ConvergenceRow:
    N: int
    eps: float
    E_eps: float
    E_0: float
    energy_gap: float
    body_l2_gap: float
    trace_gap: float
    weak_gaps: list[float]
    deriv_gaps: list[float]
    failed: bool = False
    kkt: float = float("nan")
    equality_relative: float = float("nan")
    method: str = ""
    iterations: int = 0


@dataclass
class ConvergenceReport:
    rows: list[ConvergenceRow]
    test_functions: list[str]
    config: dict
    limit_config: dict = field(default_factory=dict)
    limit_converged: bool = True

    @property
    def failed(self) -> bool:
        return (not self.limit_converged) or any(r.failed for r in self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def columns(self) -> list[str]:
        base = ["N", "eps", "E_eps", "E_0", "energy_gap", "body_l2_gap", "trace_gap"]
        return base + [f"weak_gap[{t}]" for t in self.test_functions] + [f"deriv_gap[{t}]" for t in self.test_functions]


def limit_reference_config(template: JunctionConfig, N_max: int, refine: int = 4) -> JunctionConfig:
    """Limit mesh at ``refine`` times the per-rod resolution of the finest eps run."""
    return JunctionConfig(
        a=template.a, l=template.l, h=template.h, N=N_max, gamma=template.gamma,
        nx_rod=template.nx_rod * refine, ny_rod=template.ny_rod * refine,
        ny_body=template.ny_body * refine,
    )


def _failed_row(N, eps, E0, k) -> ConvergenceRow:
    nan = float("nan")
    return ConvergenceRow(N, eps, nan, E0, nan, nan, nan, [nan] * k, [nan] * k, failed=True)


def run_convergence(template: JunctionConfig, N_list, data: ProblemData, test_functions=None, method: str = "pdas", limit_refine: int = 4, solver_options=None) -> ConvergenceReport:
    N_list = [int(n) for n in N_list]
    if any(b <= a for a, b in zip(N_list, N_list[1:])) or N_list[0] < 1:
        raise ValueError("N_list must be strictly increasing positive integers")
    solver_options = dict(solver_options or {})
    if test_functions is None:
        test_functions = default_test_functions(template.a, template.l)
    test_functions = [parse_expression(t) if isinstance(t, str) else t for t in test_functions]
    k = len(test_functions)

    lcfg = limit_reference_config(template, N_list[-1], limit_refine)
    lmesh = build_limit_mesh(lcfg)
    limit = solve_limit(assemble_limit(lmesh, data), method, **solver_options)
    E0 = energy_limit(limit) if limit.converged else float("nan")
    log.info("limit problem: E0=%.12g (%s, %d it)", E0, limit.result.method, limit.result.iterations)

    rows = []
    for N in N_list:
        cfg = template.with_N(N)
        try:
            mesh = build_junction_mesh(cfg)
            vi = assemble_eps(mesh, data)
            res = solve(vi, method, **solver_options)
            if not res.converged or not limit.converged:
                rows.append(_failed_row(N, cfg.eps, E0, k))
                continue
            u = vi.system.expand(res.u)
            E = energy_eps(u, mesh, vi.system.A)
            gaps = weak_gaps(u, mesh, limit, test_functions)
            eq = check_definitions_equivalence(vi, res, 0)
            rows.append(ConvergenceRow(
                N, cfg.eps, E, E0, abs(E - E0), gaps.body_l2_gap, gaps.trace_gap,
                gaps.weak_gaps, gaps.deriv_gaps, False, kkt_residual(vi, res.u).max(),
                eq.equality_relative, res.method, res.iterations,
            ))
            log.info("N=%d: E_eps=%.12g gap=%.3e", N, E, abs(E - E0))
        except Exception as exc:  # noqa: BLE001 - a failed row is part of the report
            log.error("N=%d failed: %s", N, exc)
            rows.append(_failed_row(N, cfg.eps, E0, k))
    rows.sort(key=lambda r: -r.eps)
    return ConvergenceReport(rows, [t.text for t in test_functions], template.describe(), lcfg.describe(), limit.converged)


def _fmt(x: float) -> str:
    return f"{x:.11e}"


def write_report_csv(report: ConvergenceReport, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(report.columns())
        for r in report.rows:
            w.writerow(
                [r.N, _fmt(r.eps), _fmt(r.E_eps), _fmt(r.E_0), _fmt(r.energy_gap), _fmt(r.body_l2_gap), _fmt(r.trace_gap)]
                + [_fmt(v) for v in r.weak_gaps]
                + [_fmt(v) for v in r.deriv_gaps]
            )
    return path
