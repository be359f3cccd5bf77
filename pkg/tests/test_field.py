"""Normalization, test functions, sign algebra, and field evaluation."""

import itertools
import math

import numpy as np
import pytest

import fkfield as fk
from fkfield import estimators as est
from fkfield import field as fld
from fkfield import lattice as lat
from fkfield.clusters import cluster_stats, label_clusters


def p0_ensemble(n=8, sweeps=30):
    g = fk.build_lattice(est.padded_spec(n))
    sched = fk.Schedule(sweeps=sweeps, therm=0, thinning=1, seed=33, chains=1)
    (ens,) = fk.run_chains(g, fk.CouplingSpec("fk", 2, 0.0, 0.0), sched)
    return g, est.centered_window(g, n), ens


def test_scale_factor_all_singletons_both_routes():
    # p = 0: the window moment is the window site count, exactly, every
    # snapshot and via either route
    g, w, ens = p0_ensemble()
    for method in ("cluster-moment", "two-point-sum"):
        th = fld.scale_factor([ens], w, method)
        assert th.value == pytest.approx(1.0 / 9.0, abs=1e-12)
        assert np.all(np.asarray(th.per_chain_series[0]) == 81.0)


def test_scale_factor_placements_reduce_to_single():
    g, w, ens = p0_ensemble()
    th1 = fld.scale_factor([ens], w, placements=1)
    th9 = fld.scale_factor([ens], w, placements=9)
    assert np.array_equal(th1.per_chain_series[0], th9.per_chain_series[0])
    with pytest.raises(ValueError):
        fld.scale_factor([ens], w, placements=5)
    with pytest.raises(ValueError):
        fld.scale_factor([ens], w, "two-point-sum", placements=4)


def test_potts_signs_algebra():
    for q in (2, 3, 4, 5):
        signs = np.array([fld.potts_signs(q, k) for k in range(q)])
        # row k: +1 at color k, -1/(q-1) elsewhere
        for k in range(q):
            assert signs[k, k] == 1.0
            off = np.delete(signs[k], k)
            assert np.all(off == -1.0 / (q - 1))
    # per-color sum vanishes exactly for q = 3 (binary-exact halves)
    s3 = sum(fld.potts_signs(3, k) for k in range(3))
    assert np.all(s3 == 0.0)


def test_product_integral_closed_forms():
    w = lat.Window(0.25, 0.25, 0.5)
    ind = fld.indicator(w)
    assert fld.product_integral(ind, ind) == pytest.approx(0.25, rel=1e-10)
    bump = fld.gaussian_bump(0.5, 0.5, 0.08)
    # int exp(-d^2/sigma^2) = pi sigma^2, truncation at 3 sigma is sub-1e-3
    assert fld.product_integral(bump, bump) == pytest.approx(
        math.pi * 0.08 ** 2, rel=2e-3)
    far = fld.gaussian_bump(5.0, 5.0, 0.08)
    assert fld.product_integral(bump, far) == 0.0


def test_bump_truncation_and_bbox():
    bump = fld.gaussian_bump(0.0, 0.0, 0.1)
    assert bump.bbox == pytest.approx((-0.3, -0.3, 0.3, 0.3), abs=1e-12)
    vals = bump(np.array([[0.0, 0.0], [0.31, 0.0], [0.29, 0.0]]))
    assert vals[0] == 1.0 and vals[1] == 0.0 and vals[2] > 0.0


def test_indicator_values():
    w = lat.Window(1.0, 1.0, 1.0)
    ind = fld.indicator(w)
    vals = ind(np.array([[1.5, 1.5], [0.5, 0.5], [2.0, 1.0]]))
    assert vals[0] == 1.0 and vals[1] == 0.0 and vals[2] == 1.0


def test_conditional_covariance_matches_color_enumeration():
    # tiny labeling: enumerate all q^k colorings and average the sign product
    g = fk.rect_lattice(2, 2, "free", 1.0)
    mask = np.array([True, False, False, False])
    lab = label_clusters(g, mask, "bonds")
    w = lat.Window(0.0, 0.0, 1.0)
    stats = cluster_stats(lab, w)
    f = fld.indicator(lat.Window(0.0, 0.0, 0.4))
    gfun = fld.indicator(lat.Window(0.6, 0.0, 0.4))
    scale = 0.37
    for q in (2, 3):
        got = fld.field_covariance_given_clusters(stats, g, scale, f, gfun, q)
        fsums = fld.cluster_function_sums(stats, g, f)
        gsums = fld.cluster_function_sums(stats, g, gfun)
        signs = fld.potts_signs(q, 0)
        total = 0.0
        for combo in itertools.product(range(q), repeat=len(stats)):
            sf = sum(signs[c] * fs for c, fs in zip(combo, fsums))
            sg = sum(signs[c] * gs for c, gs in zip(combo, gsums))
            total += sf * sg
        want = scale * scale * total / (q ** len(stats))
        assert got == pytest.approx(want, rel=1e-12)


def test_cutoff_zero_is_plain_field_value():
    g, w, ens = p0_ensemble(sweeps=10)
    th = fld.scale_factor([ens], w)
    f = fld.indicator(w)
    from fkfield.field import family_spins
    from fkfield.rng import SIGN_STREAM, stream
    for t, labeling in enumerate(fld.ensemble_labelings(ens)):
        stats = cluster_stats(labeling, w)
        fam = fld.rescaled_area_family(stats, g, th.value, 0.0, 2,
                                       stream(7, t, SIGN_STREAM))
        spins = family_spins(fam, labeling)
        plain = fld.field_value(spins, th.value, f, w)
        cut = fld.cutoff_field_value(fam, f, w)
        assert cut == plain


def test_cutoff_drops_small_clusters():
    g, w, ens = p0_ensemble(sweeps=5)
    th = fld.scale_factor([ens], w)
    labeling = next(iter(fld.ensemble_labelings(ens)))
    stats = cluster_stats(labeling, w)
    from fkfield.rng import SIGN_STREAM, stream
    fam = fld.rescaled_area_family(stats, g, th.value, 0.5, 2,
                                   stream(7, 0, SIGN_STREAM))
    # p = 0 clusters are single sites with zero diameter: cutoff kills all
    f = fld.indicator(w)
    assert fld.cutoff_field_value(fam, f, w) == 0.0
