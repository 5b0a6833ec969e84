"""Homogenized problem: Poisson in the body, x2-anisotropic obstacle problem in D0."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .assembly import LIMIT_ANISOTROPIC, apply_dirichlet, assemble_load, assemble_stiffness, gauss_1d
from .eps_problem import solve
from .expressions import Expression
from .geometry import BODY, D0, I_0, I_L, Mesh
from .problem_data import ProblemData
from .vi_solver import (
    DiscreteVI,
    EquivalenceReport,
    SolveResult,
    check_definitions_equivalence,
    random_feasible,
    solve_bruteforce,
    solve_psor,
)


@dataclass
class LimitSolution:
    result: SolveResult
    vi: DiscreteVI
    mesh: Mesh
    u: np.ndarray  # full nodal field (zeros on I_l)
    u_plus: np.ndarray  # node ids of the closed body
    u_minus: np.ndarray  # node ids of the closed D0
    interface_values: np.ndarray  # u on I_0 nodes ordered by x1
    interface_mu: np.ndarray  # multiplier on I_0 nodes (nan where unconstrained)
    definition_check: EquivalenceReport | None = None

    @property
    def converged(self) -> bool:
        return self.result.converged


def assemble_limit(mesh: Mesh, data: ProblemData) -> DiscreteVI:
    if mesh.kind != "limit":
        raise ValueError("the limit problem needs a limit mesh")
    h = mesh.config.h
    A = assemble_stiffness(mesh, LIMIT_ANISOTROPIC, h=h)
    b = assemble_load(mesh, data, "limit", h=h)
    system = apply_dirichlet(A, b, mesh, (I_L,))
    if data.constrained:
        d0_nodes = mesh.region_nodes(D0)
        nodes = np.setdiff1d(d0_nodes, mesh.node_sets[I_L])
        idx = system.free_map[nodes]
        x = mesh.nodes[nodes]
        bounds = np.asarray(data.g(x[:, 0], x[:, 1]), dtype=float)
    else:
        idx = np.zeros(0, dtype=np.int64)
        bounds = np.zeros(0)
    return DiscreteVI(system.A_red, system.b_red, idx, bounds, "limit", system, mesh)


def solve_limit(vi: DiscreteVI, method: str = "pdas", check_trials: int = 50, **options) -> LimitSolution:
    mesh = vi.mesh
    res = solve(vi, method, **options)
    u = vi.system.expand(res.u)
    iface = mesh.node_sets[I_0]
    mu_full = np.full(mesh.n_nodes, np.nan)
    mu_full[vi.system.free[vi.index]] = res.mu
    sol = LimitSolution(
        result=res,
        vi=vi,
        mesh=mesh,
        u=u,
        u_plus=mesh.region_nodes(BODY),
        u_minus=mesh.region_nodes(D0),
        interface_values=u[iface],
        interface_mu=mu_full[iface],
    )
    if res.converged:
        sol.definition_check = check_definitions_equivalence(vi, res, check_trials)
    return sol


def energy_matrix(sol: LimitSolution) -> sp.csr_matrix:
    return sol.vi.system.A


def check_minty(vi: DiscreteVI, u: np.ndarray, trials: int = 50, seed: int = 1) -> float:
    """Worst violation of  phi^T A (phi - u) >= b^T (phi - u)  over random feasible phi."""
    rng = np.random.default_rng(seed)
    amp = 1.0 + np.abs(u).max(initial=0.0)
    worst = 0.0
    for _ in range(trials):
        phi = random_feasible(vi, rng, amp)
        val = float((vi.A @ phi - vi.b) @ (phi - u))
        worst = max(worst, -val)
    return worst


def flux_jump(sol: LimitSolution) -> np.ndarray:
    """|d2 u+ - h d2 u-| at I_0 column nodes from one-sided element gradients.

    Gradients are taken along the column edges adjacent to the interface,
    averaged over the two neighbouring columns for interior nodes.
    """
    mesh = sol.mesh
    g = mesh.grid
    nr = g.n_rod_rows
    h = mesh.config.h
    na = g.node_at
    u = sol.u
    up = (u[na[:, nr + 1]] - u[na[:, nr]]) / (mesh.nodes[na[:, nr + 1], 1] - mesh.nodes[na[:, nr], 1])
    down = (u[na[:, nr]] - u[na[:, nr - 1]]) / (mesh.nodes[na[:, nr], 1] - mesh.nodes[na[:, nr - 1], 1])
    return np.abs(up - h * down)


# ---------------------------------------------------------------- 1D oracle


@dataclass
class OracleProfile:
    x2: np.ndarray
    u: np.ndarray
    energy: float
    active: np.ndarray  # x2 of active constraint nodes
    result: SolveResult


def _check_x1_free(exprs):
    for e in exprs:
        if isinstance(e, Expression) and e.depends_on("x1"):
            raise ValueError(f"oracle_1d needs x1-independent data; {e.text!r} depends on x1")


def oracle_1d(body_height: float, l: float, h: float, f1, d1, g1=None, m: int = 1024, method: str = "psor", omega: float | None = None, tol: float = 1e-12, m_body: int | None = None) -> OracleProfile:
    """1D transmission problem for x1-independent data.

    Solves on [-l, body_height] with P1 elements, m cells below x2 = 0 and
    ``m_body`` (default m) above it: stiffness h on the rod part and 1 on the body part, load
    h f + 2 d below 0 and f above, u(-l) = 0, natural condition at the top,
    and u <= g1 on (-l, 0] when ``g1`` is given.  E is u^T A u per unit width.
    """
    _check_x1_free([f1, d1, g1])
    if m_body is None:
        m_body = m
    hr = l / m
    hb = body_height / m_body
    x = np.concatenate([-l + hr * np.arange(m), hb * np.arange(m_body + 1)])
    x[m] = 0.0
    n = len(x)
    cells = np.stack([np.arange(n - 1), np.arange(1, n)], axis=1)
    length = np.diff(x)
    coef = np.where(x[:-1] < 0.0, h, 1.0)
    data = []
    rows = []
    cols = []
    for (i, j), L, k in zip(cells, length, coef):
        for a, bb, v in ((i, i, k / L), (j, j, k / L), (i, j, -k / L), (j, i, -k / L)):
            rows.append(a)
            cols.append(bb)
            data.append(v)
    A = sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    gx, gw = gauss_1d(2)
    t = 0.5 * (gx + 1.0)
    pts = x[:-1, None] + length[:, None] * t[None, :]
    w = 0.5 * length[:, None] * gw[None, :]
    zero = np.zeros_like(pts)
    fv = np.asarray(f1(zero, pts), dtype=float) * np.ones_like(pts)
    dv = np.asarray(d1(zero, pts), dtype=float) * np.ones_like(pts)
    rod = (x[:-1] < 0.0)[:, None]
    load = np.where(rod, h * fv + 2.0 * dv, fv)
    fe0 = np.sum(w * load * (1 - t)[None, :], axis=1)
    fe1 = np.sum(w * load * t[None, :], axis=1)
    b = np.bincount(cells[:, 0], fe0, n) + np.bincount(cells[:, 1], fe1, n)
    free = np.arange(1, n)
    Ar = A[free][:, free].tocsr()
    br = b[free]
    if g1 is not None:
        idx = np.arange(0, m)  # reduced indices of x in (-l, 0]
        bounds = np.asarray(g1(np.zeros(m), x[1 : m + 1]), dtype=float) * np.ones(m)
    else:
        idx = np.zeros(0, dtype=np.int64)
        bounds = np.zeros(0)
    vi = DiscreteVI(Ar, br, idx, bounds, "oracle")
    if method == "bruteforce":
        res = solve_bruteforce(vi)
    else:
        u0 = None
        if m >= 64 and m % 2 == 0 and m_body % 2 == 0:
            coarse = oracle_1d(body_height, l, h, f1, d1, g1, m // 2, method, None, tol, m_body // 2)
            u0 = np.interp(x[1:], coarse.x2, coarse.u)
        if omega is None:
            omega = 2.0 / (1.0 + np.sin(np.pi / (2.0 * (m + m_body))))
        res = solve_psor(vi, omega=omega, tol=tol, u0=u0)
    u = np.concatenate([[0.0], res.u])
    energy = float(u @ (A @ u))
    active = x[1:][res.active_set]
    return OracleProfile(x, u, energy, active, res)
