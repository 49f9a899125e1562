import csv
import itertools

import numpy as np
import pytest

from latticebc.lattice import (
    CELL_AREA,
    LATTICE_MATRIX,
    NN_VECTORS,
    DefectSpec,
    build_hexagon,
    build_periodic_cell,
    hexagon_coords,
    nn_stencil,
    p1_gradient,
    truncate,
    write_lattice_csv,
)


def test_hexagon_site_counts():
    assert len(hexagon_coords(0)) == 1
    assert len(build_hexagon(1)) == 7
    # every lattice point of a side-K hexagon, by brute force over a box
    for K in (1, 2, 5):
        box = [(i, j) for i in range(-K, K + 1) for j in range(-K, K + 1) if max(abs(i), abs(j), abs(i + j)) <= K]
        assert len(build_hexagon(K)) == len(box)


def test_hexagon_size_ratio_tends_to_one():
    ratios = [len(hexagon_coords(K)) / (3 * K**2) for K in (10, 100, 1000)]
    assert ratios[0] > ratios[1] > ratios[2] > 1.0
    assert ratios[2] == pytest.approx(1.0, abs=2e-3)


def test_lattice_matrix():
    assert np.linalg.det(LATTICE_MATRIX) > 0
    assert np.allclose(LATTICE_MATRIX, [[1, np.cos(np.pi / 3)], [0, np.sin(np.pi / 3)]])


def test_regular_stencil_is_six_unit_bonds():
    lat = build_hexagon(4)
    centre = lat.index_of((0.0, 0.0))
    st = nn_stencil(lat, centre)
    assert len(st) == 6
    assert np.allclose(np.linalg.norm(st, axis=1), 1.0)
    angles = np.sort(np.mod(np.degrees(np.arctan2(st[:, 1], st[:, 0])), 360))
    assert np.allclose(angles, [0, 60, 120, 180, 240, 300])


def test_vacancy_removes_origin_and_bond():
    lat = build_hexagon(4, DefectSpec("vacancy"))
    assert lat.index_of((0.0, 0.0)) == -1
    assert len(lat) == len(build_hexagon(4)) - 1
    st = nn_stencil(lat, lat.index_of((1.0, 0.0)))
    assert len(st) == 5
    assert not np.any(np.all(np.isclose(st, (-1.0, 0.0)), axis=1))


def test_interstitial_bonds_by_distance():
    lat = build_hexagon(4, DefectSpec("interstitial"))
    s = lat.index_of((0.5, 0.0))
    assert s >= 0
    assert len(lat) == len(build_hexagon(4)) + 1
    # brute force: all lattice points within one spacing of the interstitial
    x = np.array([0.5, 0.0])
    expected = []
    for i, j in itertools.product(range(-3, 4), repeat=2):
        p = LATTICE_MATRIX @ (i, j)
        if np.linalg.norm(p - x) <= 1 + 1e-6:
            expected.append(p - x)
    st = nn_stencil(lat, s)
    assert len(st) == len(expected) == 4
    for e in expected:
        assert np.any(np.all(np.isclose(st, e), axis=1))
    # the bond graph is symmetric
    for e in expected:
        other = lat.index_of(x + e)
        assert np.any(np.all(np.isclose(nn_stencil(lat, other), -e), axis=1))


def test_stencil_symmetry_interior():
    lat = build_hexagon(5)
    for b in range(len(lat.owner)):
        a, n = lat.owner[b], lat.nbr[b]
        if lat.complete[a] and lat.complete[n]:
            back = lat.rho[(lat.owner == n) & (lat.nbr == a)]
            assert np.allclose(back, -lat.rho[b])


def test_screw_core_on_site_rejected():
    with pytest.raises(ValueError):
        DefectSpec("screw", (1.0, 0.0))
    DefectSpec("screw", (1 / 3, 0.5 / np.sqrt(3)))


def test_triangulation_tiles_hexagon():
    K = 6
    tri = build_hexagon(K).triangulation()
    assert len(tri) == 6 * K**2
    assert tri.areas.min() > 1e-12
    assert tri.areas.sum() == pytest.approx(6 * np.sqrt(3) / 4 * K**2)


def test_p1_gradient_constant_and_affine():
    lat = build_hexagon(4, DefectSpec("vacancy"))
    tri = lat.triangulation()
    assert np.allclose(p1_gradient(np.full(len(lat), 3.0), tri), 0.0)
    G = np.array([[0.3, -1.2], [2.0, 0.5]])
    grads = p1_gradient(lat.positions @ G.T, tri)
    assert np.allclose(grads, G)


def test_p1_gradient_matches_affine_fit():
    rng = np.random.default_rng(7)
    lat = build_hexagon(1)
    tri = lat.triangulation()
    u = rng.normal(size=len(lat))
    grads = p1_gradient(u, tri)
    for t, nodes in enumerate(tri.triangles):
        M = np.column_stack([np.ones(3), lat.positions[nodes]])
        coef = np.linalg.solve(M, u[nodes])
        assert np.allclose(grads[t, 0], coef[1:])


def test_bond_norm_equals_gradient_norm():
    # each unit triangle has sum_e (grad u . e)^2 = 3/2 |grad u|^2 and every edge
    # is shared by two triangles and bonded twice: ||Du||^2 = 2 sqrt(3) ||grad Iu||^2
    rng = np.random.default_rng(3)
    for K in (6, 12):
        lat = build_hexagon(K + 2)
        tri = lat.triangulation()
        u = np.where(lat.hexdist[:, None] <= K, rng.normal(size=(len(lat), 2)), 0.0)
        du = u[lat.nbr] - u[lat.owner]
        lhs = np.sum(du**2)
        g = tri.gradient(u)
        rhs = np.sum(tri.areas * np.einsum("tma,tma->t", g, g))
        assert lhs == pytest.approx(2 * np.sqrt(3) * rhs, rel=1e-12)


def test_truncate_constant_and_local():
    lat = build_hexagon(24)
    tri = lat.triangulation()
    R = 20.0
    assert np.allclose(truncate(np.full(len(lat), 2.5), tri, R), 0.0)
    r = np.linalg.norm(lat.positions, axis=1)
    u = np.where(r < R / 2, np.cos(r), 0.0)
    out = truncate(u, tri, R)
    assert np.allclose(out[r <= R / 2], u[r <= R / 2])
    assert np.allclose(out[r >= R], 0.0)


def test_truncate_error_constant_stable():
    # ||grad(Pi_R u - u)|| / ||grad u||_{outside B_{R/2}} stays bounded across doublings
    ratios = []
    for R in (8.0, 16.0, 32.0):
        lat = build_hexagon(int(2.5 * R))
        tri = lat.triangulation()
        r = np.linalg.norm(lat.positions, axis=1)
        u = 1.0 / np.maximum(r, 1.0)
        gd = tri.gradient(truncate(u, tri, R) - u)
        num = np.sqrt(np.sum(tri.areas * np.einsum("tma,tma->t", gd, gd)))
        gu = tri.gradient(u)
        outside = np.linalg.norm(tri.centroids, axis=1) >= R / 2
        den = np.sqrt(np.sum((tri.areas * np.einsum("tma,tma->t", gu, gu))[outside]))
        ratios.append(num / den)
    C = ratios[0]
    assert all(q <= 1.5 * C for q in ratios)


def test_truncate_needs_annulus():
    tri = build_hexagon(2).triangulation()
    with pytest.raises(ValueError):
        truncate(np.zeros(len(tri.points)), tri, 100.0)


def test_periodic_cell_wraps():
    lat = build_periodic_cell(3)
    assert len(lat) == 49
    assert np.all(lat.n_bonds == 6)
    assert np.allclose(np.linalg.norm(lat.rho, axis=1), 1.0)
    vac = build_periodic_cell(3, DefectSpec("vacancy"))
    assert len(vac) == 48 and np.sum(vac.n_bonds == 5) == 6
    with pytest.raises(ValueError):
        build_periodic_cell(3, DefectSpec("screw", (1 / 3, 0.2)))


def test_lattice_csv(tmp_path):
    lat = build_hexagon(2, DefectSpec("vacancy"))
    path = tmp_path / "lat.csv"
    write_lattice_csv(lat, path)
    rows = list(csv.DictReader(open(path)))
    assert list(rows[0]) == ["index", "x", "y", "n_bonds"]
    assert len(rows) == len(lat)
    keys = [(round(2 * float(r["y"]) * np.sqrt(3)), float(r["x"])) for r in rows]
    assert keys == sorted(keys)


def test_cell_area():
    assert CELL_AREA == pytest.approx(abs(np.linalg.det(LATTICE_MATRIX)))
    assert np.allclose(NN_VECTORS[:3], -NN_VECTORS[3:])
