import numpy as np
import pytest

from xyfluct.lattice import (DomainError, LoopError, build_domain, build_rect_domain,
                             check_simply_connected, dirichlet_laplacian, loop_edges)


def test_three_by_three_counts(grid3):
    dom = grid3
    assert dom.n_vertices == 9
    assert dom.n_directed == 24 and dom.n_edges == 12
    assert dom.n_plaquettes == 4
    assert int(dom.boundary.sum()) == 8
    assert len(dom.interior_indices) == 1


def test_single_square_all_boundary():
    dom = build_rect_domain(2, 1.0, (0, 0), (1, 1))
    assert dom.n_vertices == 4 and dom.n_plaquettes == 1
    assert dom.boundary.all() and len(dom.interior_indices) == 0


def test_cube_counts():
    dom = build_rect_domain(3, 0.5, (0, 0, 0), (1, 1, 1))
    n = 3
    assert dom.n_vertices == 27
    assert dom.n_edges == 3 * n * n * (n - 1) == 54
    assert dom.n_plaquettes == 3 * n * (n - 1) ** 2 == 36


def test_reverse_edges_and_plaquette_cycles(grid5):
    dom = grid5
    dirs = dom.directed_edges()
    m = dom.n_edges
    assert np.array_equal(dirs[m:], dirs[:m, ::-1])
    for ids in dom.plaq_edges:
        e = dirs[ids]
        assert np.array_equal(e[:, 1], np.roll(e[:, 0], -1))


def test_euler_relation_on_rectangles():
    for hi in [(2, 2), (3, 5), (6, 4)]:
        dom = build_rect_domain(2, 1.0, (0, 0), hi)
        assert dom.n_plaquettes == dom.n_edges - dom.n_vertices + 1
        assert check_simply_connected(dom)


def test_punctured_grid_not_simply_connected():
    dom = build_domain(2, 1.0, lambda p: not (p[0] == 1 and p[1] == 1), (0, 0), (2, 2))
    assert dom.n_vertices == 8
    assert not check_simply_connected(dom)
    assert check_simply_connected(build_rect_domain(2, 1.0, (0, 0), (1, 1)))


def test_loop_edges(grid3):
    dom = grid3
    v = [dom.vertex_index(c) for c in [(0, 0), (1, 0), (1, 1), (0, 1), (0, 0)]]
    ids = loop_edges(dom, v)
    assert sorted(ids) == sorted(dom.plaq_edges[0])
    a, b = dom.vertex_index((0, 0)), dom.vertex_index((1, 0))
    two = loop_edges(dom, [a, b, a])
    assert list(two) == [dom.directed_edge(a, b), dom.directed_edge(b, a)]
    ring = [(0, 0), (1, 0), (2, 0), (2, 1), (2, 2), (1, 2), (0, 2), (0, 1), (0, 0)]
    assert len(loop_edges(dom, [dom.vertex_index(c) for c in ring])) == 8
    with pytest.raises(LoopError):
        loop_edges(dom, [a, b])


def test_plaquette_loops_reproduce_stored_edges(grid5):
    dom = grid5
    dirs = dom.directed_edges()
    for ids in dom.plaq_edges:
        cyc = list(dirs[ids][:, 0]) + [dirs[ids][0, 0]]
        assert list(loop_edges(dom, cyc)) == list(ids)


def test_boundary_is_outer_ring(grid5):
    dom = grid5
    c = dom.coords
    outer = (c == 0).any(axis=1) | (c == 4).any(axis=1)
    assert np.array_equal(dom.boundary, outer)


def test_laplacian_single_interior(grid3):
    assert dirichlet_laplacian(grid3).tolist() == [[4.0]]


def test_bad_domains():
    with pytest.raises(DomainError):
        build_rect_domain(1, 1.0, (0,), (2,))
    with pytest.raises(DomainError):
        build_rect_domain(2, 1.0, (0, 0), (0, 2))
    with pytest.raises(DomainError):
        build_rect_domain(2, -1.0, (0, 0), (2, 2))
