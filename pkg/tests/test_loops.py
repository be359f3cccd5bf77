"""Medial-lattice loops on free square patches."""

import numpy as np
import pytest

import fkfield as fk
from fkfield.clusters import label_clusters, loops_to_json, trace_medial_loops


def test_all_closed_wraps_every_site():
    g = fk.rect_lattice(3, 3, "free", 1.0)
    loops = trace_medial_loops(g, np.zeros(g.nbonds, bool))
    assert len(loops) == 9
    assert loops.count_with_sites_inside() == 9
    assert all(l.length == 4 for l in loops.loops)


def test_all_open_patch():
    # one cluster, four interior holes, one outer boundary: 5 loops
    g = fk.rect_lattice(3, 3, "free", 1.0)
    loops = trace_medial_loops(g, np.ones(g.nbonds, bool))
    assert len(loops) == 5
    assert loops.count_with_sites_inside() == 1


def test_single_dimer():
    g = fk.rect_lattice(1, 2, "free", 1.0)
    both = trace_medial_loops(g, np.ones(g.nbonds, bool))
    assert len(both) == 1
    none = trace_medial_loops(g, np.zeros(g.nbonds, bool))
    assert len(none) == 2


def test_arc_conservation():
    g = fk.rect_lattice(3, 3, "free", 1.0)
    rng = np.random.default_rng(17)
    for _ in range(20):
        mask = rng.random(g.nbonds) < 0.5
        loops = trace_medial_loops(g, mask)
        assert sum(l.length for l in loops.loops) == loops.n_arcs == 4 * g.nsites


def test_vertices_are_bond_midpoints():
    g = fk.rect_lattice(2, 2, "free", 1.0)
    loops = trace_medial_loops(g, np.ones(g.nbonds, bool))
    for loop in loops.loops:
        frac = loop.vertices - np.floor(loop.vertices)
        # each midpoint has exactly one half-integer coordinate
        assert np.all(np.isclose(frac.sum(axis=1) % 1.0, 0.5))


def test_loop_identity_random_sample():
    # loop count = clusters + dual clusters - 1 (spot check; the exhaustive
    # sweep over all 3x3 configurations runs in the acceptance battery)
    g = fk.rect_lattice(3, 3, "free", 1.0)
    rng = np.random.default_rng(23)
    for _ in range(50):
        mask = rng.random(g.nbonds) < 0.5
        loops = trace_medial_loops(g, mask)
        lab = label_clusters(g, mask, "bonds", with_dual=True)
        assert len(loops) == lab.count + lab.dual_count - 1


def test_loops_json_shape():
    g = fk.rect_lattice(2, 2, "free", 1.0)
    blob = loops_to_json(trace_medial_loops(g, np.ones(g.nbonds, bool)))
    assert blob["n_medial_edges"] == 16
    assert len(blob["loops"]) >= 1
