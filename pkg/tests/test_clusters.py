"""Cluster labeling, window statistics, and coloring."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import fkfield as fk
from fkfield import lattice as lat
from fkfield.clusters import cluster_stats, color_clusters, label_clusters
from fkfield.rng import COLOR_STREAM, stream


def brute_components(nsites, edges, mask):
    """Reference union-find over the open edges."""
    parent = list(range(nsites))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for (u, v), keep in zip(edges, mask):
        if keep:
            ru, rv = find(u), find(v)
            if ru != rv:
                parent[ru] = rv
    return [find(i) for i in range(nsites)]


@given(st.integers(min_value=0, max_value=2 ** 12 - 1))
@settings(max_examples=120, deadline=None)
def test_labeling_matches_brute_force(cfg):
    g = fk.rect_lattice(3, 3, "free", 1.0)
    mask = np.array([(cfg >> e) & 1 for e in range(g.nbonds)], dtype=bool)
    lab = label_clusters(g, mask, "bonds")
    ref = brute_components(g.nsites, g.edges, mask)
    # same partition: equal labels iff equal roots
    for i in range(g.nsites):
        for j in range(i + 1, g.nsites):
            assert (lab.labels[i] == lab.labels[j]) == (ref[i] == ref[j])
    assert lab.count == len(set(ref))
    assert np.all(lab.sizes[lab.labels] >= 1)
    assert lab.sizes.sum() == g.nsites


def test_all_open_single_cluster():
    g = fk.rect_lattice(4, 4, "free", 1.0)
    lab = label_clusters(g, np.ones(g.nbonds, bool), "bonds")
    assert lab.count == 1
    assert lab.sizes[0] == 16


def test_wired_premerge():
    g = fk.disc_graph(2.5, "wired", 1.0)
    lab = label_clusters(g, np.zeros(g.nbonds, bool), "bonds")
    hull = g.premerge_sites
    assert len(set(lab.labels[hull])) == 1


def test_window_sizes_partition_window():
    g = fk.build_lattice(fk.LatticeSpec("square", 12, "periodic", 0.25))
    w = lat.Window(0.25 * 2, 0.25 * 2, 1.0)
    rng = np.random.default_rng(5)
    mask = rng.random(g.nbonds) < 0.5
    lab = label_clusters(g, mask, "bonds")
    st_ = cluster_stats(lab, w)
    assert st_.window_sizes.sum() == len(g.window_sites(w))
    assert len(np.unique(st_.ids)) == len(st_.ids)


def test_diameters_closed_and_full():
    g = fk.rect_lattice(5, 5, "free", 0.5)
    w = lat.Window(0.0, 0.0, 2.0)
    lab0 = label_clusters(g, np.zeros(g.nbonds, bool), "bonds")
    st0 = cluster_stats(lab0, w)
    assert np.all(st0.diameters == 0.0)
    lab1 = label_clusters(g, np.ones(g.nbonds, bool), "bonds")
    st1 = cluster_stats(lab1, w)
    assert st1.diameters[0] == pytest.approx(np.sqrt(2.0) * 4 * 0.5, rel=1e-12)


@given(st.integers(min_value=0, max_value=2 ** 20))
@settings(max_examples=40, deadline=None)
def test_diameters_match_pairwise_max(seed):
    g = fk.rect_lattice(5, 5, "free", 1.0)
    rng = np.random.default_rng(seed)
    mask = rng.random(g.nbonds) < 0.5
    lab = label_clusters(g, mask, "bonds")
    w = lat.Window(0.0, 0.0, 4.0)
    st_ = cluster_stats(lab, w)
    pos = g.positions()
    for cid, diam in zip(st_.ids, st_.diameters):
        pts = pos[lab.labels == cid]
        want = 0.0
        for i in range(len(pts)):
            d = np.hypot(pts[i + 1:, 0] - pts[i, 0], pts[i + 1:, 1] - pts[i, 1])
            if d.size:
                want = max(want, float(d.max()))
        assert diam == pytest.approx(want, rel=1e-12, abs=1e-12)


def test_color_clusters_range_and_determinism():
    g = fk.rect_lattice(4, 4, "free", 1.0)
    rngm = np.random.default_rng(8)
    mask = rngm.random(g.nbonds) < 0.4
    lab = label_clusters(g, mask, "bonds")
    spins1 = color_clusters(lab, 3, stream(42, 0, COLOR_STREAM))
    spins2 = color_clusters(lab, 3, stream(42, 0, COLOR_STREAM))
    assert np.array_equal(spins1.colors, spins2.colors)
    assert spins1.colors.min() >= 0 and spins1.colors.max() < 3
    # within a cluster the color is constant
    for cid in range(lab.count):
        vals = np.unique(spins1.colors[lab.labels == cid])
        assert len(vals) == 1


def test_color_clusters_pinned_cluster():
    g = fk.rect_lattice(4, 4, "free", 1.0)
    lab = label_clusters(g, np.zeros(g.nbonds, bool), "bonds")
    pinned = int(lab.labels[5])
    spins = color_clusters(lab, 3, stream(1, 0, COLOR_STREAM), fixed=(pinned, 0))
    assert spins.colors[5] == 0


def test_site_mode_labels_species():
    g = fk.build_lattice(fk.LatticeSpec("triangular", 6, "periodic", 1.0))
    rng = np.random.default_rng(3)
    occ = rng.random(g.nsites) < 0.5
    lab = label_clusters(g, occ, "sites")
    # same-species neighbors share a label
    for (u, v) in g.edges:
        if occ[u] == occ[v]:
            assert lab.labels[u] == lab.labels[v]
        else:
            assert lab.labels[u] != lab.labels[v]
