"""Structured quadrilateral meshes of the thick junction and its limit domain.

Both meshes live on one logical tensor grid: columns follow a sorted x1
grid, rows run from the rod bases (x2 = -l) up to the interface x2 = 0 and
then through the body along the mapped coordinate x2 = s * gamma(x1),
s in [0, 1].  A node exists at (column, row) when the point belongs to the
meshed domain.  Node ids follow lexicographic (x1, x2) order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Union

import numpy as np

from .expressions import Expression, constant, parse_expression

# boundary tags
S_EPS = "S_eps"
GAMMA_EPS = "Gamma_eps"
I_0 = "I_0"
I_L = "I_l"
NEUMANN_BODY = "NeumannBody"
NEUMANN_GAP = "NeumannRodTopGap"
NO_FLUX = "NoFlux"

# region flags
BODY = "body"
ROD = "rod"
D0 = "d0"

# local edge k joins local nodes EDGE_NODES[k]
EDGE_NODES = ((0, 1), (1, 2), (2, 3), (3, 0))

GammaLike = Union[Expression, Callable, float, str]


class MeshError(ValueError):
    pass


def _as_gamma(gamma: GammaLike) -> Expression | Callable:
    if isinstance(gamma, str):
        return parse_expression(gamma)
    if isinstance(gamma, (int, float)):
        return constant(float(gamma))
    return gamma


@dataclass(frozen=True)
class JunctionConfig:
    """Geometry and resolution of the junction.

    ``nx_gap`` is the number of element columns in an interior gap between
    two rods (each end gap gets half of it); ``None`` picks an even count
    giving roughly the rod cell width.
    """

    a: float = 1.0
    l: float = 1.0
    h: float = 0.5
    N: int = 4
    gamma: GammaLike = 1.0
    nx_rod: int = 4
    ny_rod: int = 32
    ny_body: int = 32
    nx_gap: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "gamma", _as_gamma(self.gamma))
        self.check()

    @property
    def eps(self) -> float:
        return self.a / self.N

    @property
    def gap_cells(self) -> int:
        if self.nx_gap is not None:
            return self.nx_gap
        return 2 * max(1, round(self.nx_rod * (1.0 - self.h) / (2.0 * self.h)))

    def gamma_at(self, x1) -> np.ndarray:
        x1 = np.asarray(x1, dtype=float)
        if isinstance(self.gamma, Expression):
            vals = self.gamma(x1, np.zeros_like(x1))
        else:
            vals = self.gamma(x1)
        return np.broadcast_to(np.asarray(vals, dtype=float), x1.shape)

    def check(self):
        if not (self.a > 0 and self.l > 0):
            raise MeshError("a and l must be positive")
        if not 0.0 < self.h < 1.0:
            raise MeshError("h must lie in (0, 1)")
        if int(self.N) != self.N or self.N < 1:
            raise MeshError("N must be a positive integer")
        if not self.eps * self.h < self.a:
            raise MeshError("rod thickness eps*h must be smaller than a")
        if self.nx_rod < 2 or self.ny_rod < 4 or self.ny_body < 4:
            raise MeshError("resolution below minimum (nx_rod>=2, ny_rod>=4, ny_body>=4)")
        if self.nx_gap is not None and (self.nx_gap < 2 or self.nx_gap % 2):
            raise MeshError("nx_gap must be an even integer >= 2")
        g = self.gamma_at(np.linspace(0.0, self.a, 1001))
        if not np.all(np.isfinite(g)) or g.min() <= 0.0:
            raise MeshError("gamma must be finite and strictly positive on [0, a]")

    def with_N(self, N: int) -> "JunctionConfig":
        return replace(self, N=N)

    def refined(self, factor: int = 2) -> "JunctionConfig":
        """All resolution counts multiplied by ``factor`` (nested grids)."""
        return replace(
            self,
            nx_rod=self.nx_rod * factor,
            ny_rod=self.ny_rod * factor,
            ny_body=self.ny_body * factor,
            nx_gap=self.gap_cells * factor,
        )

    def rod_interval(self, j: int) -> tuple[float, float]:
        e = self.eps
        return (j + (1.0 - self.h) / 2.0) * e, (j + (1.0 + self.h) / 2.0) * e

    def describe(self) -> dict:
        gtext = getattr(self.gamma, "text", repr(self.gamma))
        return {
            "a": self.a, "l": self.l, "h": self.h, "N": self.N, "gamma": gtext,
            "nx_rod": self.nx_rod, "ny_rod": self.ny_rod, "ny_body": self.ny_body,
            "nx_gap": self.gap_cells,
        }


@dataclass
class StructuredGrid:
    """Logical grid behind a mesh, used for point location."""

    xs: np.ndarray  # column abscissas
    rod_levels: np.ndarray  # x2 values of rows below the interface, ending at 0
    body_levels: np.ndarray  # s values of body rows, starting at 0
    gamma_xs: np.ndarray  # gamma at the column abscissas
    node_at: np.ndarray  # (ncol, nrow) node id or -1

    @property
    def n_rod_rows(self) -> int:
        return len(self.rod_levels) - 1


@dataclass
class Mesh:
    nodes: np.ndarray  # (n, 2)
    elements: np.ndarray  # (m, 4) counterclockwise node ids
    regions: np.ndarray  # (m,) region flag strings
    boundary_edges: np.ndarray  # (k, 2) element id, local edge id
    edge_tags: np.ndarray  # (k,) tag strings
    grid: StructuredGrid
    config: JunctionConfig
    kind: str  # "junction", "limit" or "rectangle"
    node_sets: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.node_sets:
            self.node_sets = self._derive_node_sets()

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def tags(self) -> list[str]:
        return sorted(set(self.edge_tags.tolist()))

    def _derive_node_sets(self) -> dict:
        sets = {}
        for tag in sorted(set(self.edge_tags.tolist())):
            sel = self.edge_tags == tag
            ids = []
            for e, k in self.boundary_edges[sel]:
                i, j = EDGE_NODES[k]
                ids.append(self.elements[e, i])
                ids.append(self.elements[e, j])
            sets[tag] = np.unique(np.asarray(ids, dtype=np.int64))
        return sets

    def edge_endpoints(self, tag: str | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Node ids (first, second) of boundary edges, optionally filtered by tag."""
        be = self.boundary_edges
        if tag is not None:
            be = be[self.edge_tags == tag]
        loc = np.asarray(EDGE_NODES)[be[:, 1]]
        first = self.elements[be[:, 0], loc[:, 0]]
        second = self.elements[be[:, 0], loc[:, 1]]
        return first, second

    def element_mask(self, region: str) -> np.ndarray:
        return self.regions == region

    def region_nodes(self, region: str) -> np.ndarray:
        return np.unique(self.elements[self.element_mask(region)])


def _subdivide(x0: float, x1: float, n: int) -> np.ndarray:
    out = x0 + (x1 - x0) * np.arange(n + 1) / n
    out[-1] = x1
    return out


def junction_columns(config: JunctionConfig) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """x1 grid of the junction body and the column index range of each rod."""
    m = config.gap_cells
    pieces = []
    rods = []
    left = 0.0
    col = 0
    for j in range(config.N):
        r0, r1 = config.rod_interval(j)
        gap = m // 2 if j == 0 else m
        pieces.append(_subdivide(left, r0, gap)[:-1])
        col += gap
        pieces.append(_subdivide(r0, r1, config.nx_rod)[:-1])
        rods.append((col, col + config.nx_rod))
        col += config.nx_rod
        left = r1
    pieces.append(_subdivide(left, config.a, m // 2))
    xs = np.concatenate(pieces)
    return xs, rods


def _grid_nodes(xs, rod_levels, body_levels, gamma_xs, present):
    """Number present grid points in lexicographic (x1, x2) order."""
    ncol, nrow = present.shape
    node_at = -np.ones((ncol, nrow), dtype=np.int64)
    nr = len(rod_levels) - 1
    coords = []
    nid = 0
    for c in range(ncol):
        for r in range(nrow):
            if not present[c, r]:
                continue
            x2 = rod_levels[r] if r <= nr else body_levels[r - nr] * gamma_xs[c]
            coords.append((xs[c], x2))
            node_at[c, r] = nid
            nid += 1
    return np.asarray(coords, dtype=float), node_at


def _cells(node_at, cell_present):
    """Elements (c, r) -> counterclockwise ids; returns element array and cell index list."""
    cs, rs = np.nonzero(cell_present)
    order = np.lexsort((rs, cs))
    cs, rs = cs[order], rs[order]
    elems = np.stack(
        [node_at[cs, rs], node_at[cs + 1, rs], node_at[cs + 1, rs + 1], node_at[cs, rs + 1]],
        axis=1,
    )
    if np.any(elems < 0):
        raise MeshError("cell refers to a missing node (non-conforming grid)")
    return elems, cs, rs


def _boundary_edges(cell_present, cs, rs):
    """(element, local edge) pairs whose neighbour cell is absent."""
    ncol, nrow = cell_present.shape
    lookup = -np.ones_like(cell_present, dtype=np.int64)
    lookup[cs, rs] = np.arange(len(cs))

    def present(c, r):
        return 0 <= c < ncol and 0 <= r < nrow and cell_present[c, r]

    edges = []
    for e, (c, r) in enumerate(zip(cs.tolist(), rs.tolist())):
        for k, (dc, dr) in enumerate(((0, -1), (1, 0), (0, 1), (-1, 0))):
            if not present(c + dc, r + dr):
                edges.append((e, k))
    return np.asarray(edges, dtype=np.int64).reshape(-1, 2)


def build_junction_mesh(config: JunctionConfig) -> Mesh:
    config.check()
    xs, rods = junction_columns(config)
    for j, (c0, c1) in enumerate(rods):
        r0, r1 = config.rod_interval(j)
        if not (math.isclose(xs[c0], r0, abs_tol=1e-14 * config.a) and math.isclose(xs[c1], r1, abs_tol=1e-14 * config.a)):
            raise MeshError("body x1 grid does not conform to rod edges")
    gamma_xs = config.gamma_at(xs)
    if gamma_xs.min() <= 0.0:
        raise MeshError("gamma must be strictly positive at mesh columns")
    rod_levels = -config.l + config.l * np.arange(config.ny_rod + 1) / config.ny_rod
    rod_levels[-1] = 0.0
    body_levels = np.arange(config.ny_body + 1) / config.ny_body
    ncol, nr = len(xs), config.ny_rod
    nrow = nr + config.ny_body + 1

    in_rod_col = np.zeros(ncol, dtype=bool)
    in_rod_cell = np.zeros(ncol - 1, dtype=bool)
    for c0, c1 in rods:
        in_rod_col[c0 : c1 + 1] = True
        in_rod_cell[c0:c1] = True
    present = np.zeros((ncol, nrow), dtype=bool)
    present[:, nr:] = True
    present[in_rod_col, :nr] = True
    nodes, node_at = _grid_nodes(xs, rod_levels, body_levels, gamma_xs, present)

    cell_present = np.zeros((ncol - 1, nrow - 1), dtype=bool)
    cell_present[:, nr:] = True
    cell_present[in_rod_cell, :nr] = True
    elements, cs, rs = _cells(node_at, cell_present)
    regions = np.where(rs < nr, ROD, BODY).astype(object)

    edges = _boundary_edges(cell_present, cs, rs)
    tags = []
    for e, k in edges:
        r = rs[e]
        if r < nr:
            tags.append(GAMMA_EPS if k == 0 else S_EPS)
        elif r == nr and k == 0:
            tags.append(NEUMANN_GAP)
        else:
            tags.append(NEUMANN_BODY)
    grid = StructuredGrid(xs, rod_levels, body_levels, gamma_xs, node_at)
    return Mesh(nodes, elements, regions, edges, np.asarray(tags, dtype=object), grid, config, "junction")


def limit_columns(config: JunctionConfig) -> np.ndarray:
    n = config.nx_rod * config.N
    return _subdivide(0.0, config.a, n)


def build_limit_mesh(config: JunctionConfig) -> Mesh:
    config.check()
    xs = limit_columns(config)
    gamma_xs = config.gamma_at(xs)
    if gamma_xs.min() <= 0.0:
        raise MeshError("gamma must be strictly positive at mesh columns")
    rod_levels = -config.l + config.l * np.arange(config.ny_rod + 1) / config.ny_rod
    rod_levels[-1] = 0.0
    body_levels = np.arange(config.ny_body + 1) / config.ny_body
    ncol, nr = len(xs), config.ny_rod
    nrow = nr + config.ny_body + 1
    present = np.ones((ncol, nrow), dtype=bool)
    nodes, node_at = _grid_nodes(xs, rod_levels, body_levels, gamma_xs, present)
    cell_present = np.ones((ncol - 1, nrow - 1), dtype=bool)
    elements, cs, rs = _cells(node_at, cell_present)
    regions = np.where(rs < nr, D0, BODY).astype(object)
    edges = _boundary_edges(cell_present, cs, rs)
    tags = []
    for e, k in edges:
        if rs[e] < nr:
            tags.append(I_L if k == 0 else NO_FLUX)
        else:
            tags.append(NEUMANN_BODY)
    grid = StructuredGrid(xs, rod_levels, body_levels, gamma_xs, node_at)
    mesh = Mesh(nodes, elements, regions, edges, np.asarray(tags, dtype=object), grid, config, "limit")
    # I_0 is interior to the limit domain; expose its nodes for bookkeeping
    mesh.node_sets[I_0] = node_at[:, nr].copy()
    return mesh


def rectangle_mesh(x0: float, x1: float, y0: float, y1: float, nx: int, ny: int) -> Mesh:
    """Plain structured rectangle with edge tags bottom/right/top/left."""
    xs = _subdivide(x0, x1, nx)
    ys = _subdivide(y0, y1, ny)
    node_at = (np.arange(nx + 1)[:, None] * (ny + 1) + np.arange(ny + 1)[None, :]).astype(np.int64)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    nodes = np.stack([X.ravel(), Y.ravel()], axis=1)
    cell_present = np.ones((nx, ny), dtype=bool)
    elements, cs, rs = _cells(node_at, cell_present)
    edges = _boundary_edges(cell_present, cs, rs)
    names = ("bottom", "right", "top", "left")
    tags = np.asarray([names[k] for _, k in edges], dtype=object)
    # point location (locate/interpolate) is not supported on rectangles
    grid = StructuredGrid(xs, np.array([0.0]), ys, np.ones_like(xs), node_at)
    cfg = JunctionConfig(a=max(x1 - x0, 1e-300), l=1.0, h=0.5, N=1, gamma=1.0, nx_rod=2, ny_rod=4, ny_body=4)
    regions = np.full(len(elements), BODY, dtype=object)
    return Mesh(nodes, elements, regions, edges, tags, grid, cfg, "rectangle")


def edge_lengths(mesh: Mesh, tag: str | None = None) -> np.ndarray:
    a, b = mesh.edge_endpoints(tag)
    return np.linalg.norm(mesh.nodes[b] - mesh.nodes[a], axis=1)


def boundary_measure(mesh: Mesh, tag: str) -> float:
    if tag not in set(mesh.edge_tags.tolist()):
        raise KeyError(f"unknown boundary tag {tag!r}; mesh has {mesh.tags}")
    return float(math.fsum(edge_lengths(mesh, tag)))


def element_corner_jacobians(mesh: Mesh) -> np.ndarray:
    """Jacobian determinants at the 2x2 Gauss points, shape (m, 4)."""
    g = 1.0 / math.sqrt(3.0)
    X = mesh.nodes[mesh.elements]  # (m,4,2)
    out = []
    for xi, eta in ((-g, -g), (g, -g), (g, g), (-g, g)):
        dxi = 0.25 * np.array([-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)])
        deta = 0.25 * np.array([-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)])
        jx = np.einsum("a,mad->md", dxi, X)
        jy = np.einsum("a,mad->md", deta, X)
        out.append(jx[:, 0] * jy[:, 1] - jx[:, 1] * jy[:, 0])
    return np.stack(out, axis=1)


def locate(mesh: Mesh, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cell corner node ids and local coordinates (xi, eta) in [0,1]^2.

    Works for junction and limit meshes through the mapped structured grid.
    Points outside the meshed region raise ``MeshError``.
    """
    g = mesh.grid
    p = np.atleast_2d(np.asarray(points, dtype=float))
    x1, x2 = p[:, 0], p[:, 1]
    xs = g.xs
    tol = 1e-12 * max(1.0, abs(xs[-1] - xs[0]))
    if np.any(x1 < xs[0] - tol) or np.any(x1 > xs[-1] + tol):
        raise MeshError("point outside the x1 range of the mesh")
    c = np.clip(np.searchsorted(xs, x1, side="right") - 1, 0, len(xs) - 2)
    xi = np.clip((x1 - xs[c]) / (xs[c + 1] - xs[c]), 0.0, 1.0)
    nr = g.n_rod_rows
    gam = (1.0 - xi) * g.gamma_xs[c] + xi * g.gamma_xs[c + 1]
    body = x2 >= 0.0
    r = np.empty(len(p), dtype=np.int64)
    eta = np.empty(len(p))
    s = np.where(body, x2 / gam, 0.0)
    bl = g.body_levels
    rb = np.clip(np.searchsorted(bl, s, side="right") - 1, 0, len(bl) - 2)
    eb = (s - bl[rb]) / (bl[rb + 1] - bl[rb])
    rl = g.rod_levels
    if nr > 0:
        rr = np.clip(np.searchsorted(rl, x2, side="right") - 1, 0, nr - 1)
        er = (x2 - rl[rr]) / (rl[rr + 1] - rl[rr])
    else:
        rr = np.zeros(len(p), dtype=np.int64)
        er = np.zeros(len(p))
    r[:] = np.where(body, nr + rb, rr)
    eta[:] = np.where(body, eb, er)
    if np.any(eta < -1e-9) or np.any(eta > 1 + 1e-9):
        raise MeshError("point outside the x2 range of the mesh")
    eta = np.clip(eta, 0.0, 1.0)
    na = g.node_at
    corners = np.stack([na[c, r], na[c + 1, r], na[c + 1, r + 1], na[c, r + 1]], axis=1)
    # a point on the right edge of a rod belongs to the cell on its left
    left = np.any(corners < 0, axis=1) & (xi == 0.0) & (c > 0)
    if left.any():
        cl, rl_ = c[left] - 1, r[left]
        corners[left] = np.stack([na[cl, rl_], na[cl + 1, rl_], na[cl + 1, rl_ + 1], na[cl, rl_ + 1]], axis=1)
        xi = xi.copy()
        xi[left] = 1.0
    if np.any(corners < 0):
        raise MeshError("point lies outside the meshed domain")
    return corners, xi, eta


def interpolate(mesh: Mesh, u: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Evaluate the bilinear finite element field ``u`` at ``points``."""
    corners, xi, eta = locate(mesh, points)
    w = np.stack([(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta], axis=1)
    return np.sum(w * u[corners], axis=1)


def write_mesh_csv(mesh: Mesh, out_dir: Path, prefix: str = "") -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [out_dir / f"{prefix}nodes.csv", out_dir / f"{prefix}elements.csv", out_dir / f"{prefix}edges.csv"]
    with open(paths[0], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "x1", "x2"])
        for i, (x, y) in enumerate(mesh.nodes):
            w.writerow([i, f"{x:.11e}", f"{y:.11e}"])
    with open(paths[1], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "n0", "n1", "n2", "n3", "region"])
        for i, (el, reg) in enumerate(zip(mesh.elements, mesh.regions)):
            w.writerow([i, *el.tolist(), reg])
    with open(paths[2], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["elem", "local_edge", "tag"])
        for (e, k), tag in zip(mesh.boundary_edges, mesh.edge_tags):
            w.writerow([int(e), int(k), tag])
    return paths
