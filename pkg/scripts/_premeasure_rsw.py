"""Scratch driver: acceptance-scale RSW numbers at a in {1/64,1/128,1/256}."""
import time

import numpy as np

import fkfield as fk
from fkfield import estimators as est

SEEDS = {64: 201, 128: 202, 256: 203}

for n in (256,):
    t0 = time.perf_counter()
    g = fk.build_lattice(est.padded_spec(n))
    sched = fk.Schedule(sweeps=4800, therm=300, thinning=3, seed=SEEDS[n],
                        chains=2)
    coup = fk.CouplingSpec("fk", 2, fk.critical_point("fk"), 0.0)
    chains = fk.run_chains(g, coup, sched)
    t1 = time.perf_counter()
    po = est.annulus_circuit_prob(chains, 0.125, 0.25, "primal")
    t2 = time.perf_counter()
    pd = est.annulus_circuit_prob(chains, 0.125, 0.25, "dual")
    t3 = time.perf_counter()
    ov, oe = po.values[0], po.stderrs[0]
    dv, de = pd.values[0], pd.stderrs[0]
    print(f"n={n} a=1/{n}: open={ov:.6f}({oe:.6f}) sig0={ov/max(oe,1e-12):.2f} "
          f"dual={dv:.6f}({de:.6f}) dsig={abs(ov-dv)/max(np.hypot(oe,de),1e-12):.2f}",
          flush=True)
    print(f"  timing: sample={t1-t0:.1f}s primal={t2-t1:.1f}s dual={t3-t2:.1f}s "
          f"snaps={sum(len(e) for e in chains)}", flush=True)
