"""Graph construction, windows, and geometric classification."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import fkfield as fk
from fkfield import estimators as est
from fkfield import lattice as lat


def test_free_rectangle_counts():
    g = fk.rect_lattice(4, 3, "free", 1.0)
    assert g.nsites == 12
    assert g.nbonds == 4 * 2 + 3 * 3  # vertical + horizontal interior bonds


def test_periodic_square_counts():
    g = fk.build_lattice(lat.LatticeSpec("square", 5, "periodic", 1.0))
    assert g.nsites == 25
    assert g.nbonds == 2 * 25


def test_periodic_triangular_counts():
    g = fk.build_lattice(lat.LatticeSpec("triangular", 5, "periodic", 1.0))
    assert g.nsites == 25
    assert g.nbonds == 3 * 25


def test_periodic_needs_three_sites():
    with pytest.raises(ValueError):
        fk.build_lattice(lat.LatticeSpec("square", 2, "periodic", 1.0))


def test_padded_window_site_count():
    for n in (4, 8, 16):
        g = fk.build_lattice(est.padded_spec(n))
        w = est.centered_window(g, n)
        assert len(g.window_sites(w)) == (n + 1) ** 2


def test_window_sites_lie_inside():
    g = fk.build_lattice(est.padded_spec(8))
    w = est.centered_window(g, 8)
    pos = g.positions()[g.window_sites(w)]
    tol = 1e-9
    assert np.all(pos[:, 0] >= w.x0 - tol) and np.all(pos[:, 0] <= w.x0 + w.side + tol)
    assert np.all(pos[:, 1] >= w.y0 - tol) and np.all(pos[:, 1] <= w.y0 + w.side + tol)


def test_site_subgraph_tromino():
    g = fk.site_subgraph([(0, 0), (0, 1), (1, 0)])
    assert g.nsites == 3
    assert g.nbonds == 2
    with pytest.raises(ValueError):
        fk.site_subgraph([(0, 0), (0, 0)])


def test_disc_graph_contains_center():
    g = fk.disc_graph(3.0, "free", 1.0)
    assert g.center_site >= 0
    c = g.coords[g.center_site]
    d = np.hypot(g.coords[:, 0] - c[0], g.coords[:, 1] - c[1])
    assert d.max() <= 3.0 + 1e-9


def test_wired_disc_premerges_hull():
    g = fk.disc_graph(3.0, "wired", 1.0)
    assert len(g.premerge_sites) >= 2


def test_classify_point_disc():
    g = fk.rect_lattice(5, 5, "free", 1.0)
    center = 12  # (2, 2)
    d = lat.Disc(2.0, 2.0, 1.5)
    inside = lat.classify_point(g, center, d)
    assert inside.inside
    corner = 0
    assert not lat.classify_point(g, corner, d).inside


@given(st.integers(min_value=-20, max_value=20),
       st.integers(min_value=-20, max_value=20),
       st.sampled_from(["square", "triangular"]))
@settings(max_examples=60, deadline=None)
def test_embed_roundtrip(i, j, kind):
    xy = lat.embed(kind, np.array([[i, j]], dtype=np.float64))[0]
    fi, fj = lat.invert_embed(kind, xy[0], xy[1])
    assert abs(fi - i) < 1e-9 and abs(fj - j) < 1e-9


def test_dual_map_free_rectangle():
    g = fk.rect_lattice(4, 4, "free", 1.0)
    assert g.dual_edges is not None
    assert g.dual_edges.shape == (g.nbonds, 2)
    assert g.dual_nsites > 0


@given(st.integers(min_value=0, max_value=23), st.integers(min_value=0, max_value=23))
@settings(max_examples=25, deadline=None)
def test_window_translation_invariance(ox, oy):
    # every site-aligned unit window on the torus holds the same site count
    g = fk.build_lattice(est.padded_spec(4))  # 16x16 torus at a = 1/4
    if ox > g.nx - 5 or oy > g.ny - 5:
        return
    w = lat.Window(ox * g.a, oy * g.a, 1.0)
    assert len(g.window_sites(w)) == 25
