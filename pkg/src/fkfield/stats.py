"""Error estimation for correlated chain output.

batch_means handles autocorrelated single-chain series; jackknife over chains
handles nonlinear reductions (fit exponents, ratios).  Nothing here knows
about lattices.
"""

from __future__ import annotations

import numpy as np


def batch_means(x, nbatch: int = 20):
    """(mean, stderr) of a correlated series via non-overlapping batch means.

    Falls back to the naive iid estimate when the series is too short to cut
    into >= 4 batches of >= 2 points."""
    x = np.asarray(x, dtype=np.float64)
    m = float(x.mean())
    if x.size < 8:
        if x.size < 2:
            return m, float("nan")
        return m, float(x.std(ddof=1) / np.sqrt(x.size))
    nb = int(min(nbatch, x.size // 2))
    nb = max(nb, 4)
    blen = x.size // nb
    trimmed = x[: nb * blen].reshape(nb, blen)
    bm = trimmed.mean(axis=1)
    return m, float(bm.std(ddof=1) / np.sqrt(nb))


def integrated_autocorr_time(x, c: float = 5.0) -> float:
    """Sokal self-consistent-window estimate of tau_int (>= 0.5).

    Window: smallest W with W >= c * tau_int(W)."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if n < 4:
        return 0.5
    x = x - x.mean()
    var = float(np.dot(x, x)) / n
    if var == 0.0:
        return 0.5
    # FFT autocovariance, normalized to rho(0) = 1
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, m)
    acov = np.fft.irfft(f * np.conj(f), m)[:n].real / n
    rho = acov / var
    tau = 0.5
    for w in range(1, n):
        tau += rho[w]
        if w >= c * tau:
            return float(max(tau, 0.5))
    return float(max(tau, 0.5))


def jackknife(values, fn):
    """(estimate, stderr) of fn(mean over chains) by leave-one-out jackknife.

    `values` is a (chains, ...) array; fn maps the chain-averaged array to a
    scalar.  With a single chain the stderr is nan."""
    values = np.asarray(values, dtype=np.float64)
    c = values.shape[0]
    full = float(fn(values.mean(axis=0)))
    if c < 2:
        return full, float("nan")
    total = values.sum(axis=0)
    loo = np.array([
        fn((total - values[i]) / (c - 1)) for i in range(c)
    ])
    err = np.sqrt((c - 1) / c * np.sum((loo - loo.mean()) ** 2))
    return full, float(err)


def merge_mean_stderr(means, stderrs):
    """Combine independent chain means (equal weights): pooled mean and stderr.

    With >= 4 chains the stderr is the larger of the spread estimate and the
    propagated per-chain errors; the spread alone is chi^2-noisy at few chains
    and can come out misleadingly small."""
    means = np.asarray(means, dtype=np.float64)
    stderrs = np.asarray(stderrs, dtype=np.float64)
    m = float(means.mean())
    c = means.size
    ok = np.isfinite(stderrs)
    prop = float(np.sqrt(np.sum(stderrs[ok] ** 2)) / c) if ok.any() else float("nan")
    if c >= 4:
        spread = float(means.std(ddof=1) / np.sqrt(c))
        if np.isfinite(prop):
            return m, max(spread, prop)
        return m, spread
    return m, prop
