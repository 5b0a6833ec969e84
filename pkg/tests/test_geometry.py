from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from junctionlab.geometry import (
    BODY,
    D0,
    GAMMA_EPS,
    I_0,
    I_L,
    NEUMANN_BODY,
    NEUMANN_GAP,
    NO_FLUX,
    ROD,
    S_EPS,
    JunctionConfig,
    MeshError,
    boundary_measure,
    build_junction_mesh,
    build_limit_mesh,
    edge_lengths,
    element_corner_jacobians,
    interpolate,
    locate,
    rectangle_mesh,
    write_mesh_csv,
)


def _area(mesh):
    x = mesh.nodes[mesh.elements]
    # shoelace per quadrilateral
    s = x[:, :, 0] * np.roll(x[:, :, 1], -1, axis=1) - np.roll(x[:, :, 0], -1, axis=1) * x[:, :, 1]
    return 0.5 * s.sum()


def test_rod_positions_n2():
    cfg = JunctionConfig(a=1, l=1, h=0.5, N=2)
    assert cfg.eps == 0.5
    assert cfg.rod_interval(0) == pytest.approx((0.125, 0.375))
    assert cfg.rod_interval(1) == pytest.approx((0.625, 0.875))


def test_boundary_measures_n2(small_junction):
    assert boundary_measure(small_junction, S_EPS) == pytest.approx(4.0, abs=1e-12)
    assert boundary_measure(small_junction, GAMMA_EPS) == pytest.approx(0.5, abs=1e-12)
    assert set(small_junction.tags) == {S_EPS, GAMMA_EPS, NEUMANN_BODY, NEUMANN_GAP}
    with pytest.raises(KeyError):
        boundary_measure(small_junction, "nonsense")


def test_top_boundary_arc_length():
    cfg = JunctionConfig(a=1, l=1, h=0.5, N=4, gamma="1+0.2*x1", ny_body=16)
    mesh = build_junction_mesh(cfg)
    a, b = mesh.edge_endpoints(NEUMANN_BODY)
    top = (np.abs(mesh.nodes[a, 1] - cfg.gamma_at(mesh.nodes[a, 0])) < 1e-12) & (
        np.abs(mesh.nodes[b, 1] - cfg.gamma_at(mesh.nodes[b, 0])) < 1e-12
    )
    length = np.linalg.norm(mesh.nodes[b[top]] - mesh.nodes[a[top]], axis=1).sum()
    assert length == pytest.approx(math.sqrt(1.04), rel=1e-3)


def test_limit_mesh_counts(small_limit):
    assert len(small_limit.elements) == 64
    assert small_limit.n_nodes == 9 * 9
    centroid_y = small_limit.nodes[small_limit.elements][:, :, 1].mean(axis=1)
    np.testing.assert_array_equal(small_limit.regions == D0, centroid_y < 0)
    assert boundary_measure(small_limit, I_L) == pytest.approx(1.0, abs=1e-14)
    assert set(small_limit.tags) == {I_L, NO_FLUX, NEUMANN_BODY}
    assert len(small_limit.node_sets[I_0]) == 9
    assert np.all(small_limit.nodes[small_limit.node_sets[I_0], 1] == 0.0)


@pytest.mark.parametrize("N", [1, 2, 5, 8])
@pytest.mark.parametrize("gamma", ["1", "1+0.2*x1", "1+0.1*sin(pi*x1)"])
def test_junction_area_and_tags(N, gamma):
    cfg = JunctionConfig(a=1, l=1, h=0.5, N=N, gamma=gamma, nx_rod=4, ny_rod=8, ny_body=64)
    mesh = build_junction_mesh(cfg)
    xs = mesh.grid.xs
    body_area = np.trapezoid(cfg.gamma_at(xs), xs)  # top boundary is the chord polygon
    assert _area(mesh) == pytest.approx(body_area + cfg.a * cfg.h * cfg.l, rel=1e-12)
    assert boundary_measure(mesh, S_EPS) == pytest.approx(2 * N * cfg.l, rel=1e-12)
    assert boundary_measure(mesh, GAMMA_EPS) == pytest.approx(cfg.a * cfg.h, rel=1e-12)
    # every boundary edge carries exactly one tag
    assert len(mesh.edge_tags) == len(mesh.boundary_edges)
    assert np.all(element_corner_jacobians(mesh) > 0)
    # rod elements lie inside some rod strip
    rod = mesh.element_mask(ROD)
    cx = mesh.nodes[mesh.elements[rod]][:, :, 0].mean(axis=1)
    j = np.floor(cx / cfg.eps).astype(int)
    lo = (j + (1 - cfg.h) / 2) * cfg.eps
    hi = (j + (1 + cfg.h) / 2) * cfg.eps
    assert np.all((cx > lo) & (cx < hi))
    assert np.all(mesh.nodes[mesh.elements[mesh.element_mask(BODY)]][:, :, 1] >= 0)


def test_conformity(small_junction):
    # each interior edge is shared by exactly two elements, boundary edges by one
    counts = {}
    for el in small_junction.elements:
        for k in range(4):
            e = tuple(sorted((el[k], el[(k + 1) % 4])))
            counts[e] = counts.get(e, 0) + 1
    assert set(counts.values()) <= {1, 2}
    assert sum(1 for c in counts.values() if c == 1) == len(small_junction.boundary_edges)


def test_node_ids_lexicographic(small_junction):
    x = small_junction.nodes
    order = np.lexsort((x[:, 1], x[:, 0]))
    np.testing.assert_array_equal(order, np.arange(len(x)))


def test_refined_meshes_nest():
    cfg = JunctionConfig(N=3, nx_rod=2, ny_rod=4, ny_body=4)
    coarse = build_junction_mesh(cfg)
    fine = build_junction_mesh(cfg.refined(2))
    fine_pts = {tuple(np.round(p, 12)) for p in fine.nodes}
    assert all(tuple(np.round(p, 12)) in fine_pts for p in coarse.nodes)
    assert len(fine.elements) == 4 * len(coarse.elements)


@pytest.mark.parametrize(
    "kwargs",
    [dict(h=1.0), dict(h=0.0), dict(a=-1), dict(N=0), dict(nx_rod=1), dict(gamma="x1-0.5"), dict(nx_gap=3)],
)
def test_invalid_configs(kwargs):
    with pytest.raises(MeshError):
        JunctionConfig(**kwargs)


@settings(max_examples=30, deadline=None)
@given(
    st.integers(1, 12),
    st.floats(0.1, 0.9),
    st.floats(0.2, 3.0),
    st.floats(0.2, 3.0),
    st.floats(-0.3, 0.3),
)
def test_mesh_invariants(N, h, a, l, slope):
    cfg = JunctionConfig(a=a, l=l, h=h, N=N, gamma=f"1+{slope!r}*x1/{a!r}", nx_rod=2, ny_rod=4, ny_body=4)
    mesh = build_junction_mesh(cfg)
    assert np.all(element_corner_jacobians(mesh) > 0)
    assert boundary_measure(mesh, S_EPS) == pytest.approx(2 * N * l, rel=1e-10)
    assert boundary_measure(mesh, GAMMA_EPS) == pytest.approx(a * h, rel=1e-10)
    assert np.all(edge_lengths(mesh) > 0)
    lim = build_limit_mesh(cfg)
    assert np.all(element_corner_jacobians(lim) > 0)
    assert boundary_measure(lim, I_L) == pytest.approx(a, rel=1e-12)


def test_interpolation_reproduces_bilinear_fields():
    cfg = JunctionConfig(N=4, gamma="1+0.2*x1", nx_rod=4, ny_rod=8, ny_body=8)
    for mesh in (build_junction_mesh(cfg), build_limit_mesh(cfg)):
        u = 2 * mesh.nodes[:, 0] - 3 * mesh.nodes[:, 1] + 0.5
        np.testing.assert_allclose(interpolate(mesh, u, mesh.nodes), u, atol=1e-12)
        rng = np.random.default_rng(4)
        pts = np.column_stack([rng.uniform(0, 1, 200), rng.uniform(0, 1, 200)])
        np.testing.assert_allclose(interpolate(mesh, u, pts), 2 * pts[:, 0] - 3 * pts[:, 1] + 0.5, atol=1e-12)
    with pytest.raises(MeshError):
        locate(build_junction_mesh(cfg), np.array([[0.0, -0.5]]))  # gap between rods


def test_rectangle_mesh_tags():
    m = rectangle_mesh(0, 1, -1, 0, 4, 3)
    assert len(m.elements) == 12
    assert boundary_measure(m, "bottom") == pytest.approx(1.0)
    assert boundary_measure(m, "left") == pytest.approx(1.0)


def test_mesh_csv_is_deterministic(tmp_path, small_junction):
    p1 = write_mesh_csv(small_junction, tmp_path / "a")
    p2 = write_mesh_csv(build_junction_mesh(small_junction.config), tmp_path / "b")
    for a, b in zip(p1, p2):
        assert a.read_bytes() == b.read_bytes()
    header = p1[0].read_text().splitlines()[0]
    assert header == "id,x1,x2"


@pytest.mark.parametrize("N", [1, 3, 8])
def test_tags_partition_perimeter(N):
    cfg = JunctionConfig(a=1.5, l=0.7, h=0.4, N=N, gamma=2.0, nx_rod=2, ny_rod=4, ny_body=4)
    mesh = build_junction_mesh(cfg)
    total = sum(boundary_measure(mesh, t) for t in mesh.tags)
    # top + sides of the body, bottom between rods, rod sides and bases
    exact = cfg.a + 2 * 2.0 + cfg.a * (1 - cfg.h) + 2 * N * cfg.l + cfg.a * cfg.h
    assert total == pytest.approx(exact, rel=1e-10)
    lim = build_limit_mesh(cfg)
    total = sum(boundary_measure(lim, t) for t in lim.tags)
    assert total == pytest.approx(2 * cfg.a + 2 * (2.0 + cfg.l), rel=1e-10)
