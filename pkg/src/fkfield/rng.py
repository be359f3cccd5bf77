"""Counter-based random streams.

Every stochastic component draws from a Philox generator keyed by
(master_seed, stream_index).  Philox is counter-based, so streams are
independent by construction and a chain's draws are reproducible from its
key alone, regardless of what other chains do.  Generators built here can be
passed straight into numba kernels.
"""

from __future__ import annotations

import numpy as np

# Fixed purpose tags keep derived streams from colliding with chain streams.
CHAIN_STREAM = 0
COLOR_STREAM = 1
SIGN_STREAM = 2


def stream(seed: int, index: int, purpose: int = CHAIN_STREAM) -> np.random.Generator:
    """Generator for stream `index` under `seed`; distinct purposes never overlap."""
    ss = np.random.SeedSequence([int(seed), int(purpose), int(index)])
    return np.random.Generator(np.random.Philox(ss))
