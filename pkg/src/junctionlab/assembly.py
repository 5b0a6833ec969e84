"""Bilinear-quadrilateral assembly of stiffness, mass and load terms."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .geometry import BODY, D0, EDGE_NODES, S_EPS, Mesh
from .problem_data import ProblemData

FULL = "full"
LIMIT_ANISOTROPIC = "limit_anisotropic"


class AssemblyError(ValueError):
    pass


def gauss_1d(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def _ref_shape(xi, eta):
    """Shape values (q,4) and reference derivatives (q,4,2) on [-1,1]^2."""
    xi = np.asarray(xi)
    eta = np.asarray(eta)
    N = 0.25 * np.stack([(1 - xi) * (1 - eta), (1 + xi) * (1 - eta), (1 + xi) * (1 + eta), (1 - xi) * (1 + eta)], axis=-1)
    dxi = 0.25 * np.stack([-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)], axis=-1)
    deta = 0.25 * np.stack([-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)], axis=-1)
    return N, np.stack([dxi, deta], axis=-1)


@dataclass
class ElementQuadrature:
    points: np.ndarray  # (m, q, 2) physical quadrature points
    weights: np.ndarray  # (m, q) weight * det J
    shape: np.ndarray  # (q, 4)
    grads: np.ndarray  # (m, q, 4, 2) physical shape gradients


def element_quadrature(mesh: Mesh, order: int = 2, elements: np.ndarray | None = None) -> ElementQuadrature:
    x, w = gauss_1d(order)
    XI, ETA = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w).ravel()
    N, dN = _ref_shape(XI.ravel(), ETA.ravel())
    conn = mesh.elements if elements is None else mesh.elements[elements]
    X = mesh.nodes[conn]  # (m,4,2)
    J = np.einsum("qad,mae->mqde", dN, X)  # d x_e / d ref_d
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if np.any(det <= 0.0):
        raise AssemblyError("non-positive Jacobian determinant in mesh")
    inv = np.empty_like(J)
    inv[..., 0, 0] = J[..., 1, 1] / det
    inv[..., 1, 1] = J[..., 0, 0] / det
    inv[..., 0, 1] = -J[..., 0, 1] / det
    inv[..., 1, 0] = -J[..., 1, 0] / det
    # grad N_a = J^{-1} applied to reference derivatives
    grads = np.einsum("qad,mqed->mqae", dN, inv)
    pts = np.einsum("qa,mad->mqd", N, X)
    return ElementQuadrature(pts, det * W[None, :], N, grads)


def quadrature_points(mesh: Mesh, order: int = 2) -> np.ndarray:
    return element_quadrature(mesh, order).points


def _scatter(mesh: Mesh, Ke: np.ndarray) -> sp.csr_matrix:
    conn = mesh.elements
    rows = np.repeat(conn, 4, axis=1).ravel()
    cols = np.tile(conn, (1, 4)).ravel()
    n = mesh.n_nodes
    return sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble_stiffness(mesh: Mesh, mode: str = FULL, h: float | None = None) -> sp.csr_matrix:
    """Gradient-gradient form; in limit mode only h*d2u*d2v on D0 elements."""
    q = element_quadrature(mesh)
    G = q.grads
    if mode == FULL:
        Ke = np.einsum("mq,mqad,mqbd->mab", q.weights, G, G)
    elif mode == LIMIT_ANISOTROPIC:
        if h is None:
            raise AssemblyError("limit mode needs the thickness ratio h")
        if mesh.kind != "limit":
            raise AssemblyError("limit mode needs a mesh with Body/D0 region flags")
        body = (mesh.regions == BODY)
        d0 = (mesh.regions == D0)
        if not np.all(body | d0):
            raise AssemblyError("limit mode: every element must be flagged body or d0")
        full = np.einsum("mq,mqad,mqbd->mab", q.weights, G, G)
        vert = np.einsum("mq,mqa,mqb->mab", q.weights, G[..., 1], G[..., 1])
        Ke = np.where(body[:, None, None], full, h * vert)
    else:
        raise AssemblyError(f"unknown stiffness mode {mode!r}")
    return _scatter(mesh, Ke)


def assemble_mass(mesh: Mesh) -> sp.csr_matrix:
    q = element_quadrature(mesh)
    Me = np.einsum("mq,qa,qb->mab", q.weights, q.shape, q.shape)
    return _scatter(mesh, Me)


def _volume_load(mesh: Mesh, weight_fn, elements=None) -> np.ndarray:
    q = element_quadrature(mesh, elements=elements)
    p = q.points
    vals = np.asarray(weight_fn(p[..., 0], p[..., 1]), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise AssemblyError("load data not finite at a quadrature point")
    fe = np.einsum("mq,mq,qa->ma", q.weights, vals, q.shape)
    conn = mesh.elements if elements is None else mesh.elements[elements]
    return np.bincount(conn.ravel(), weights=fe.ravel(), minlength=mesh.n_nodes)


def edge_quadrature(mesh: Mesh, tag: str, order: int = 2):
    """Points (k,q,2), weights (k,q), endpoint ids (k,2) and linear shape values (q,2)."""
    a, b = mesh.edge_endpoints(tag)
    xa, xb = mesh.nodes[a], mesh.nodes[b]
    x, w = gauss_1d(order)
    t = 0.5 * (x + 1.0)
    L = np.linalg.norm(xb - xa, axis=1)
    pts = xa[:, None, :] * (1 - t)[None, :, None] + xb[:, None, :] * t[None, :, None]
    weights = 0.5 * L[:, None] * w[None, :]
    shape = np.stack([1 - t, t], axis=1)
    return pts, weights, np.stack([a, b], axis=1), shape


def _edge_load(mesh: Mesh, tag: str, fn) -> np.ndarray:
    pts, wts, ends, shape = edge_quadrature(mesh, tag)
    vals = np.asarray(fn(pts[..., 0], pts[..., 1]), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise AssemblyError("edge data not finite at a quadrature point")
    fe = np.einsum("kq,kq,qa->ka", wts, vals, shape)
    return np.bincount(ends.ravel(), weights=fe.ravel(), minlength=mesh.n_nodes)


def assemble_load(mesh: Mesh, data: ProblemData, mode: str = "eps", eps: float | None = None, h: float | None = None) -> np.ndarray:
    """Load vector.

    ``eps`` mode: int f v over the mesh plus eps * int_{S_eps} d v ds.
    ``limit`` mode: int f v over the body plus int (h f + 2 d) v over D0.
    """
    if mode == "eps":
        if eps is None:
            eps = mesh.config.eps
        b = _volume_load(mesh, data.f)
        if S_EPS in mesh.node_sets:
            b = b + eps * _edge_load(mesh, S_EPS, data.d)
        return b
    if mode == "limit":
        if h is None:
            h = mesh.config.h
        body = np.flatnonzero(mesh.regions == BODY)
        d0 = np.flatnonzero(mesh.regions == D0)
        b = _volume_load(mesh, data.f, body)
        b += _volume_load(mesh, lambda x1, x2: h * data.f(x1, x2) + 2.0 * data.d(x1, x2), d0)
        return b
    raise AssemblyError(f"unknown load mode {mode!r}")


@dataclass
class SparseSystem:
    """Full system plus its Dirichlet-reduced form (prescribed values are 0)."""

    A: sp.csr_matrix
    b: np.ndarray
    dirichlet: np.ndarray
    free: np.ndarray  # reduced index -> node id
    free_map: np.ndarray  # node id -> reduced index or -1
    A_red: sp.csr_matrix
    b_red: np.ndarray

    @property
    def n_free(self) -> int:
        return len(self.free)

    def expand(self, u_red: np.ndarray) -> np.ndarray:
        u = np.zeros(len(self.free_map))
        u[self.free] = u_red
        return u

    def reduce(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v)[self.free]


def apply_dirichlet(A: sp.spmatrix, b: np.ndarray, mesh: Mesh | None = None, tags=()) -> SparseSystem:
    A = sp.csr_matrix(A)
    n = A.shape[0]
    fixed = []
    for tag in tags:
        if mesh is None or tag not in mesh.node_sets or len(mesh.node_sets[tag]) == 0:
            raise AssemblyError(f"Dirichlet tag {tag!r} matches no nodes")
        fixed.append(mesh.node_sets[tag])
    dirichlet = np.unique(np.concatenate(fixed)) if fixed else np.zeros(0, dtype=np.int64)
    mask = np.ones(n, dtype=bool)
    mask[dirichlet] = False
    free = np.flatnonzero(mask)
    free_map = -np.ones(n, dtype=np.int64)
    free_map[free] = np.arange(len(free))
    A_red = A[free][:, free].tocsr()
    A_red.sort_indices()
    return SparseSystem(A, np.asarray(b, dtype=float), dirichlet, free, free_map, A_red, np.asarray(b, dtype=float)[free])


def symmetry_defect(A: sp.spmatrix) -> float:
    """Largest |A_ij - A_ji| relative to max |A_ij|."""
    A = sp.csr_matrix(A)
    D = (A - A.T).tocsr()
    scale = np.abs(A.data).max() if A.nnz else 1.0
    return float(np.abs(D.data).max() / scale) if D.nnz else 0.0


def smallest_ritz_value(A: sp.spmatrix, steps: int = 50, seed: int = 0) -> float:
    """Smallest Ritz value of a Lanczos run with full reorthogonalisation."""
    n = A.shape[0]
    k = min(steps, n)
    rng = np.random.default_rng(seed)
    Q = np.zeros((n, k + 1))
    q = rng.standard_normal(n)
    Q[:, 0] = q / np.linalg.norm(q)
    alpha = np.zeros(k)
    beta = np.zeros(k)
    m = k
    for j in range(k):
        w = A @ Q[:, j]
        alpha[j] = Q[:, j] @ w
        w -= Q[:, : j + 1] @ (Q[:, : j + 1].T @ w)
        w -= Q[:, : j + 1] @ (Q[:, : j + 1].T @ w)
        beta[j] = np.linalg.norm(w)
        if beta[j] <= 1e-14 * max(1.0, abs(alpha[j])):
            m = j + 1
            break
        Q[:, j + 1] = w / beta[j]
    T = np.diag(alpha[:m]) + np.diag(beta[: m - 1], 1) + np.diag(beta[: m - 1], -1)
    return float(np.linalg.eigvalsh(T)[0])


def write_system(path: Path, A: sp.spmatrix, b: np.ndarray) -> tuple[Path, Path]:
    path = Path(path)
    mtx = path.with_suffix(".mtx")
    rhs = path.with_suffix(".rhs.txt")
    scipy.io.mmwrite(str(mtx), sp.coo_matrix(A), precision=12)
    np.savetxt(rhs, np.asarray(b), fmt="%.11e")
    return mtx, rhs


def lumped_measure(mesh: Mesh) -> float:
    q = element_quadrature(mesh)
    return float(math.fsum(q.weights.ravel()))
