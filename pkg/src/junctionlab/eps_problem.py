"""Discrete Signorini problem on the thick junction."""

from __future__ import annotations

import numpy as np

from .assembly import FULL, apply_dirichlet, assemble_load, assemble_stiffness
from .geometry import GAMMA_EPS, S_EPS, Mesh
from .problem_data import ProblemData
from .vi_solver import DiscreteVI, SolveResult, solve_pdas, solve_psor


def constraint_nodes(mesh: Mesh) -> np.ndarray:
    """S_eps nodes without the rod-base corners (Dirichlet wins there)."""
    s = mesh.node_sets[S_EPS]
    return np.setdiff1d(s, mesh.node_sets[GAMMA_EPS])


def assemble_eps(mesh: Mesh, data: ProblemData) -> DiscreteVI:
    if mesh.kind != "junction":
        raise ValueError("the eps-problem needs a junction mesh")
    A = assemble_stiffness(mesh, FULL)
    b = assemble_load(mesh, data, "eps", eps=mesh.config.eps)
    system = apply_dirichlet(A, b, mesh, (GAMMA_EPS,))
    if data.constrained:
        nodes = constraint_nodes(mesh)
        idx = system.free_map[nodes]
        x = mesh.nodes[nodes]
        bounds = np.asarray(data.g(x[:, 0], x[:, 1]), dtype=float)
    else:
        idx = np.zeros(0, dtype=np.int64)
        bounds = np.zeros(0)
    return DiscreteVI(system.A_red, system.b_red, idx, bounds, "eps", system, mesh)


def solve(vi: DiscreteVI, method: str = "pdas", **options) -> SolveResult:
    """Dispatch to a solver; PDAS falls back to warm-started PSOR if it stalls."""
    if method == "psor":
        return solve_psor(vi, **options)
    if method != "pdas":
        raise ValueError(f"unknown method {method!r}")
    res = solve_pdas(vi, **{k: v for k, v in options.items() if k in ("tol", "max_iter", "initial_active")})
    if res.converged:
        return res
    psor_opts = {k: v for k, v in options.items() if k in ("omega", "tol")}
    fallback = solve_psor(vi, u0=res.u, **psor_opts)
    fallback.method = "pdas+psor"
    fallback.history = res.history + fallback.history
    return fallback
