"""Solvers for  min 1/2 u^T A u - b^T u  subject to  u_i <= c_i  on a constraint set.

Three interchangeable methods share one result type:

* projected SOR (sequential sweep, increasing index order),
* primal-dual active set with direct sparse inner solves,
* exhaustive active-set enumeration (small oracle problems only).

The multiplier is ``mu = b - A u`` restricted to the constrained indices,
so a solution has ``mu >= 0`` and ``mu_i (c_i - u_i) = 0``.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numba
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

ACTIVE_TOL = 1e-9
BRUTEFORCE_LIMIT = 20


class SolverError(RuntimeError):
    pass


@dataclass
class DiscreteVI:
    A: sp.csr_matrix
    b: np.ndarray
    index: np.ndarray  # constrained (reduced) indices, sorted
    bounds: np.ndarray  # upper bounds on ``index``
    label: str = "custom"
    system: object = None  # SparseSystem when built from a mesh
    mesh: object = None

    def __post_init__(self):
        self.A = sp.csr_matrix(self.A, dtype=float)
        self.A.sort_indices()
        self.b = np.asarray(self.b, dtype=float)
        self.index = np.asarray(self.index, dtype=np.int64)
        self.bounds = np.asarray(self.bounds, dtype=float)
        n = self.A.shape[0]
        if self.index.shape != self.bounds.shape:
            raise ValueError("constraint index and bounds differ in length")
        if len(self.index) and (self.index.min() < 0 or self.index.max() >= n):
            raise ValueError("constraint index out of range")
        if np.any(np.diff(self.index) <= 0):
            order = np.argsort(self.index, kind="stable")
            self.index, self.bounds = self.index[order], self.bounds[order]
            if np.any(np.diff(self.index) == 0):
                raise ValueError("duplicate constraint index")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def k(self) -> int:
        return len(self.index)

    @property
    def tol_kkt(self) -> float:
        return 1e-8 * (1.0 + (np.abs(self.b).max() if self.n else 0.0))

    def upper(self) -> np.ndarray:
        """Bound vector over all indices (+inf where unconstrained)."""
        c = np.full(self.n, np.inf)
        c[self.index] = self.bounds
        return c

    def energy(self, u: np.ndarray) -> float:
        return float(0.5 * u @ (self.A @ u) - self.b @ u)

    def scaled(self, lam: float) -> "DiscreteVI":
        return DiscreteVI(self.A, lam * self.b, self.index, lam * self.bounds, self.label, self.system, self.mesh)


@dataclass
class SolveResult:
    u: np.ndarray
    mu: np.ndarray  # aligned with DiscreteVI.index
    active_set: np.ndarray  # reduced indices with u_i >= c_i - ACTIVE_TOL
    iterations: int
    converged: bool
    method: str
    history: list = field(default_factory=list)


class KKTResidual(NamedTuple):
    feasibility: float
    sign: float
    complementarity: float
    stationarity: float

    def max(self) -> float:
        return max(self)


def kkt_residual(vi: DiscreteVI, u: np.ndarray) -> KKTResidual:
    r = vi.b - vi.A @ u
    if vi.k:
        gap = vi.bounds - u[vi.index]
        mu = r[vi.index]
        feas = float(max(0.0, -gap.min()))
        sign = float(max(0.0, -mu.min()))
        comp = float(np.abs(mu * gap).max())
    else:
        feas = sign = comp = 0.0
    mask = np.ones(vi.n, dtype=bool)
    mask[vi.index] = False
    stat = float(np.abs(r[mask]).max()) if mask.any() else 0.0
    return KKTResidual(feas, sign, comp, stat)


def _finish(vi: DiscreteVI, u: np.ndarray, iterations: int, converged: bool, method: str, history) -> SolveResult:
    mu = (vi.b - vi.A @ u)[vi.index]
    act = vi.index[u[vi.index] >= vi.bounds - ACTIVE_TOL]
    return SolveResult(u, mu, act, iterations, converged, method, history)


# ------------------------------------------------------------------ PSOR


@numba.njit(cache=True)
def _psor_sweeps(indptr, indices, data, b, upper, u, omega, tol, max_sweeps, J0, hist_J, hist_du):
    n = b.shape[0]
    J = J0
    for sweep in range(max_sweeps):
        du_max = 0.0
        u_max = 0.0
        for i in range(n):
            s = 0.0
            aii = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                if j == i:
                    aii = data[p]
                else:
                    s += data[p] * u[j]
            r = b[i] - s
            old = u[i]
            new = old + omega * (r / aii - old)
            if new > upper[i]:
                new = upper[i]
            d = new - old
            if d != 0.0:
                J += 0.5 * aii * (new * new - old * old) - r * d
                u[i] = new
            ad = abs(d)
            if ad > du_max:
                du_max = ad
            au = abs(new)
            if au > u_max:
                u_max = au
        hist_J[sweep] = J
        hist_du[sweep] = du_max
        if du_max < tol * (1.0 + u_max):
            return sweep + 1, J
    return max_sweeps, J


def solve_psor(vi: DiscreteVI, omega: float = 1.5, tol: float = 1e-10, max_iter: int | None = None, u0=None, tol_kkt: float | None = None) -> SolveResult:
    """Projected SOR; stops on small nodal updates and small KKT residual."""
    if not 0.0 < omega < 2.0:
        raise ValueError("omega must lie in (0, 2)")
    if max_iter is None:
        max_iter = 200 * max(vi.n, 1)
    if tol_kkt is None:
        tol_kkt = vi.tol_kkt
    A = vi.A
    if np.any(A.diagonal() <= 0):
        raise SolverError("PSOR needs a positive diagonal")
    upper = vi.upper()
    u = np.zeros(vi.n) if u0 is None else np.array(u0, dtype=float)
    u = np.minimum(u, upper)
    J = vi.energy(u)
    hist_J = []
    hist_du = []
    done = 0
    converged = False
    chunk = 2000
    while done < max_iter:
        m = min(chunk, max_iter - done)
        hj = np.empty(m)
        hd = np.empty(m)
        used, J = _psor_sweeps(A.indptr, A.indices, A.data, vi.b, upper, u, omega, tol, m, J, hj, hd)
        hist_J.extend(hj[:used].tolist())
        hist_du.extend(hd[:used].tolist())
        done += used
        if used < m or hd[used - 1] < tol * (1.0 + np.abs(u).max(initial=0.0)):
            if kkt_residual(vi, u).max() < tol_kkt:
                converged = True
                break
            # update criterion met but KKT not yet: recompute energy to drop drift
            J = vi.energy(u)
    if not converged:
        log.warning("PSOR did not converge in %d sweeps", done)
    history = [{"sweep": i + 1, "energy": hj, "max_update": hd} for i, (hj, hd) in enumerate(zip(hist_J, hist_du))]
    return _finish(vi, u, done, converged, "psor", history)


# ------------------------------------------------------------------ PDAS


def _equality_solve(A: sp.csr_matrix, b: np.ndarray, fixed: np.ndarray, values: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    u = np.zeros(n)
    u[fixed] = values
    mask = np.ones(n, dtype=bool)
    mask[fixed] = False
    free = np.flatnonzero(mask)
    if len(free):
        rhs = b[free] - A[free][:, fixed] @ values if len(fixed) else b[free].copy()
        Aff = A[free][:, free].tocsc()
        if len(free) == 1:
            u[free] = rhs / Aff[0, 0]
        else:
            u[free] = spla.splu(Aff).solve(rhs)
    return u


def solve_pdas(vi: DiscreteVI, tol: float = 1e-10, max_iter: int = 50, initial_active=None, sigma: float = 1.0, tol_kkt: float | None = None) -> SolveResult:
    """Primal-dual active set iteration.

    ``initial_active`` is a boolean mask over the constraints (default: none
    active).  Stops when the active set repeats; a revisit of an older set
    means cycling and is reported as non-converged.
    """
    del tol  # the active-set test is exact; kept for a uniform signature
    if tol_kkt is None:
        tol_kkt = vi.tol_kkt
    k = vi.k
    active = np.zeros(k, dtype=bool) if initial_active is None else np.asarray(initial_active, dtype=bool).copy()
    seen = {active.tobytes()}
    history = []
    u = np.zeros(vi.n)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        u = _equality_solve(vi.A, vi.b, vi.index[active], vi.bounds[active])
        mu = np.zeros(k)
        if active.any():
            mu[active] = (vi.b - vi.A @ u)[vi.index[active]]
        new = mu + sigma * (u[vi.index] - vi.bounds) > 0.0
        history.append({"iteration": it, "n_active": int(active.sum()), "n_changed": int((new != active).sum())})
        if np.array_equal(new, active):
            converged = kkt_residual(vi, u).max() < tol_kkt
            break
        key = new.tobytes()
        if key in seen:
            log.warning("PDAS active set cycled after %d iterations", it)
            break
        seen.add(key)
        active = new
    return _finish(vi, u, it, converged, "pdas", history)


# ------------------------------------------------------------ brute force


def solve_bruteforce(vi: DiscreteVI, tol: float = 1e-10, return_all: bool = False):
    """Enumerate all 2^k active sets and return the KKT point.

    Each candidate set S is solved through the Schur complement on the
    constraint block: with M = (A^{-1})_CC and q = (A^{-1} b)_C, fixing
    u_S = c_S gives M_SS mu_S = q_S - c_S, u = A^{-1}(b - E_S mu_S).
    A set is KKT-consistent when mu_S >= 0 and u_C <= c.  With
    ``return_all`` the list of every consistent set is returned as well.
    """
    k = vi.k
    if k > BRUTEFORCE_LIMIT:
        raise SolverError(f"brute force refuses {k} > {BRUTEFORCE_LIMIT} constraints")
    A = vi.A.toarray()
    Ainv_b = np.linalg.solve(A, vi.b)
    if k == 0:
        res = _finish(vi, Ainv_b, 1, True, "bruteforce", [])
        return (res, [()]) if return_all else res
    E = np.zeros((vi.n, k))
    E[vi.index, np.arange(k)] = 1.0
    Ainv_E = np.linalg.solve(A, E)
    M = Ainv_E[vi.index]
    q = Ainv_b[vi.index]
    c = vi.bounds
    scale = 1.0 + np.abs(q).max() + np.abs(c).max()
    found = []
    for size in range(k + 1):
        if size == 0:
            combos = np.zeros((1, 0), dtype=np.int64)
        else:
            combos = np.array(list(itertools.combinations(range(k), size)), dtype=np.int64)
        for start in range(0, len(combos), 4096):
            S = combos[start : start + 4096]
            if size:
                Ms = M[S[:, :, None], S[:, None, :]]
                rhs = q[S] - c[S]
                mus = np.linalg.solve(Ms, rhs[..., None])[..., 0]
                ok_sign = np.all(mus >= -tol * scale, axis=1)
                uc = q[None, :] - np.einsum("kj,sj->sk", M[:, :], _embed(mus, S, k))
            else:
                mus = np.zeros((1, 0))
                ok_sign = np.array([True])
                uc = q[None, :]
            ok_feas = np.all(uc <= c[None, :] + tol * scale, axis=1)
            for t in np.flatnonzero(ok_sign & ok_feas):
                found.append((tuple(S[t].tolist()), mus[t]))
    if not found:
        raise SolverError("no KKT point found (matrix not SPD?)")
    S, mus = found[0]
    mu_full = np.zeros(k)
    mu_full[list(S)] = mus
    u = Ainv_b - Ainv_E @ mu_full
    res = _finish(vi, u, 2**k, True, "bruteforce", [{"kkt_sets": len(found)}])
    if return_all:
        return res, [s for s, _ in found]
    return res


def _embed(mus: np.ndarray, S: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((len(S), k))
    np.put_along_axis(out, S, mus, axis=1)
    return out


# ------------------------------------------------------- equivalence check


@dataclass
class EquivalenceReport:
    equality_lhs: float
    equality_rhs: float
    equality_residual: float
    equality_relative: float
    worst_inequality: float  # most negative (A u - b)^T (phi - g_vec), clipped at 0
    witness: np.ndarray | None
    trials: int

    def ok(self, tol: float = 1e-8) -> bool:
        return self.equality_relative <= tol and self.worst_inequality <= tol


def bound_vector(vi: DiscreteVI) -> np.ndarray:
    """Nodal obstacle on constrained indices, zero elsewhere."""
    g = np.zeros(vi.n)
    g[vi.index] = vi.bounds
    return g


def random_feasible(vi: DiscreteVI, rng: np.random.Generator, scale: float) -> np.ndarray:
    phi = scale * rng.standard_normal(vi.n)
    phi[vi.index] = vi.bounds - scale * np.abs(rng.standard_normal(vi.k))
    return phi


def check_definitions_equivalence(vi: DiscreteVI, result: SolveResult, trial_count: int = 50, seed: int = 0) -> EquivalenceReport:
    """Discrete integral identity and inequality for a solved VI.

    identity:    u^T A (u - g) = b^T (u - g)
    inequality:  u^T A (phi - g) >= b^T (phi - g)  for feasible phi
    with g the nodal obstacle on constrained indices and 0 elsewhere.
    """
    u = result.u
    g = bound_vector(vi)
    Au = vi.A @ u
    lhs = float(Au @ (u - g))
    rhs = float(vi.b @ (u - g))
    res = abs(lhs - rhs)
    scale = max(abs(lhs), abs(rhs), float(np.abs(Au).max(initial=0.0) * np.abs(u - g).max(initial=0.0)))
    rel = res / scale if scale > 0 else 0.0
    rng = np.random.default_rng(seed)
    amp = 1.0 + np.abs(u).max(initial=0.0)
    r = Au - vi.b
    worst = 0.0
    witness = None
    for _ in range(trial_count):
        phi = random_feasible(vi, rng, amp)
        val = float(r @ (phi - g))
        if -val > worst:
            worst = -val
            witness = phi
    return EquivalenceReport(lhs, rhs, res, rel, worst, witness, trial_count)
