"""Chain dynamics, determinism, exact enumeration, and snapshot storage."""

import math

import numpy as np
import pytest

import fkfield as fk
from fkfield import sampler as smp

P_SELF_DUAL = math.sqrt(2.0) / (1.0 + math.sqrt(2.0))


def test_critical_points():
    assert fk.critical_point("fk", 2) == pytest.approx(P_SELF_DUAL, abs=1e-15)
    assert fk.critical_point("fk", 1) == pytest.approx(0.5, abs=1e-15)
    assert fk.critical_point("independent-bond") == 0.5
    assert fk.critical_point("independent-site", kind="triangular") == 0.5


def test_beta_p_roundtrip():
    for p in (0.1, 0.5, 0.9):
        beta = smp.beta_from_p(p)
        assert 1.0 - math.exp(-2.0 * beta) == pytest.approx(p, abs=1e-14)


def test_ghost_probability():
    assert smp.ghost_probability(0.4, 0.0) == 0.0
    g1 = smp.ghost_probability(0.4, 1.0)
    g2 = smp.ghost_probability(0.4, 2.0)
    assert 0.0 < g1 < g2 < 1.0
    # h = 1 ghost bond matches a unit-coupling bond
    assert g1 == pytest.approx(0.4, abs=1e-12)


def test_exact_dimer_closed_forms():
    # 1x2 at the self-dual point, q = 2: the partition function is small
    # enough to write down: P(0 <-> 1) = sqrt(2) - 1, E sum|C|^2 = 2 sqrt(2)
    g = fk.rect_lattice(1, 2, "free", 1.0)
    ex = fk.exact_enumerate(g, fk.CouplingSpec("fk", 2, P_SELF_DUAL, 0.0))
    assert ex.connectivity[0, 1] == pytest.approx(math.sqrt(2.0) - 1.0, rel=1e-12)
    assert ex.sum_sq_sizes == pytest.approx(2.0 * math.sqrt(2.0), rel=1e-12)


def test_exact_dimer_independent_bond():
    g = fk.rect_lattice(1, 2, "free", 1.0)
    for p in (0.2, 0.7):
        ex = fk.exact_enumerate(g, fk.CouplingSpec("independent-bond", 1, p, 0.0))
        assert ex.connectivity[0, 1] == pytest.approx(p, rel=1e-12)


def test_exact_fk_marginal_general_q():
    # single bond: P(open) = p / (p + (1-p) q)
    g = fk.rect_lattice(1, 2, "free", 1.0)
    for q in (1, 2, 3):
        for p in (0.3, 0.8):
            ex = fk.exact_enumerate(g, fk.CouplingSpec("fk", q, p, 0.0))
            want = p / (p + (1.0 - p) * q)
            assert ex.bond_open_prob[0] == pytest.approx(want, rel=1e-12)


def test_oracle_bond_cap():
    g = fk.build_lattice(fk.LatticeSpec("square", 4, "periodic", 1.0))
    with pytest.raises(ValueError):
        fk.exact_enumerate(g, fk.CouplingSpec("fk", 2, 0.5, 0.0))


def test_chain_determinism():
    g = fk.rect_lattice(3, 3, "free", 1.0)
    coup = fk.CouplingSpec("fk", 2, 0.6, 0.0)
    sched = fk.Schedule(sweeps=200, therm=20, thinning=2, seed=7, chains=1)
    e1 = fk.run_chain(g, coup, sched, chain=0)
    e2 = fk.run_chain(g, coup, sched, chain=0)
    assert np.array_equal(e1.bonds_packed, e2.bonds_packed)
    e3 = fk.run_chain(g, coup, sched, chain=1)
    assert not np.array_equal(e1.bonds_packed, e3.bonds_packed)


def test_run_chains_count_and_lengths():
    g = fk.rect_lattice(2, 2, "free", 1.0)
    sched = fk.Schedule(sweeps=100, therm=10, thinning=5, seed=3, chains=3)
    chains = fk.run_chains(g, fk.CouplingSpec("fk", 2, 0.5, 0.0), sched)
    assert len(chains) == 3
    assert all(len(e) == 20 for e in chains)


def test_bond_config_unpacking():
    g = fk.rect_lattice(3, 3, "free", 1.0)
    sched = fk.Schedule(sweeps=50, therm=5, thinning=1, seed=11, chains=1)
    (ens,) = fk.run_chains(g, fk.CouplingSpec("fk", 2, 0.6, 0.0), sched)
    for t in (0, 17, len(ens) - 1):
        b = ens.bond_config(t)
        assert b.dtype == np.bool_ and b.size == g.nbonds
        packed = np.packbits(b, bitorder="little")
        assert np.array_equal(packed, ens.bonds_packed[t, :packed.size])


def test_mc_matches_exact_dimer():
    g = fk.rect_lattice(1, 2, "free", 1.0)
    coup = fk.CouplingSpec("fk", 2, P_SELF_DUAL, 0.0)
    sched = fk.Schedule(sweeps=20000, therm=100, thinning=1, seed=5, chains=1)
    (ens,) = fk.run_chains(g, coup, sched)
    rate = np.mean([ens.bond_config(t)[0] for t in range(len(ens))])
    want = fk.exact_enumerate(g, coup).bond_open_prob[0]
    sigma = math.sqrt(want * (1 - want) / len(ens))
    assert abs(rate - want) < 5 * sigma


def test_ghost_field_magnetizes():
    g = fk.rect_lattice(3, 3, "free", 1.0)
    sched = fk.Schedule(sweeps=4000, therm=100, thinning=1, seed=9, chains=1)
    dens = []
    for h in (0.5, 2.0, 8.0):
        coup = fk.CouplingSpec("fk", 2, 0.3, h)
        (ens,) = fk.run_chains(g, coup, sched)
        gh = np.mean([ens.ghost_config(t).mean() for t in range(len(ens))])
        gmax = smp.ghost_probability(0.3, h)
        # density = gmax * P(spin up); the field breaks symmetry upward
        assert gmax / 2 < gh < gmax
        dens.append(gh)
        assert np.mean(ens.ghost_size) > 0
    assert dens[0] < dens[1] < dens[2]


def test_independent_site_snapshots_are_bernoulli():
    g = fk.build_lattice(fk.LatticeSpec("triangular", 8, "periodic", 1.0))
    coup = fk.CouplingSpec("independent-site", 1, 0.5, 0.0)
    sched = fk.Schedule(sweeps=2000, therm=0, thinning=1, seed=13, chains=1)
    (ens,) = fk.run_chains(g, coup, sched)
    occ = np.mean([ens.site_config(t).mean() for t in range(len(ens))])
    assert abs(occ - 0.5) < 5 * math.sqrt(0.25 / (len(ens) * g.nsites))


def test_save_load_roundtrip(tmp_path):
    g = fk.rect_lattice(3, 3, "free", 1.0)
    sched = fk.Schedule(sweeps=60, therm=10, thinning=3, seed=21, chains=1)
    (ens,) = fk.run_chains(g, fk.CouplingSpec("fk", 2, 0.55, 0.0), sched)
    path = tmp_path / "snap.fks"
    fk.save_ensemble(str(path), ens)
    back = fk.load_ensemble(str(path))
    assert np.array_equal(back.bonds_packed, ens.bonds_packed)
    assert len(back) == len(ens)


def test_adaptive_thermalization_runs():
    g = fk.rect_lattice(3, 3, "free", 1.0)
    sched = fk.Schedule(sweeps=50, therm=-1, thinning=1, seed=2, chains=1)
    (ens,) = fk.run_chains(g, fk.CouplingSpec("fk", 2, 0.5, 0.0), sched)
    assert len(ens) == 50
