"""
Sliding a Cholesky factor along a time-varying channel
======================================================

A windowed MMSE equalizer needs ``Sigma_k^{-1} h_k`` at every symbol.  Instead
of factorizing each ``Sigma_k`` from scratch, the factor of ``Sigma_{k-1}``
is slid one sample forward, and decision feedback swaps one variance with a
rank-1 update.  This script checks the slid factor against fresh
factorizations and compares the operation counts.
"""

import numpy as np

from turboeq.numerics import (
    FlopCounter,
    WindowedCovSpec,
    chol_init,
    chol_rank1_dfe,
    chol_slide_le,
)
from turboeq.txchain import ChannelModel, window_channel

rng = np.random.default_rng(0)

# A 4-tap channel whose taps change at every sample.
K, L, N_p, N_d = 200, 4, 5, 8
taps = (rng.standard_normal((K + L - 1, L)) + 1j * rng.standard_normal((K + L - 1, L))) / np.sqrt(2 * L)
channel = ChannelModel(taps, noise_variance=0.1, time_varying=True)
prior_var = rng.uniform(0, 1, K)
N_pp = N_p + L - 1


def window_var(k):
    """Prior variances of the window symbols, zero outside the block."""
    return np.array([prior_var[x] if 0 <= x < K else 0.0 for x in range(k - N_pp, k + N_d + 1)])


# Slide the factor through the block and track the worst deviation.
slide_cost = FlopCounter()
factor = chol_init(WindowedCovSpec(0.1, window_channel(channel, 0, N_p, N_d), window_var(0)))
worst = 0.0
for k in range(1, K):
    H_prev, H_next = window_channel(channel, k - 1, N_p, N_d), window_channel(channel, k, N_p, N_d)
    factor = chol_slide_le(factor, 0.1, H_prev, H_next, window_var(k - 1), window_var(k)[-1], slide_cost)
    fresh = np.linalg.cholesky(WindowedCovSpec(0.1, H_next, window_var(k)).covariance())
    worst = max(worst, np.abs(factor.L - fresh).max() / np.abs(fresh).max())
print(f"worst relative deviation from fresh factorization over {K - 1} slides: {worst:.1e}")

# Cost of one slide against a fresh factorization of the same window.
fresh_cost = FlopCounter()
chol_init(WindowedCovSpec(0.1, window_channel(channel, K // 2, N_p, N_d), window_var(K // 2)), fresh_cost)
print(f"FLOPs per slide: {slide_cost.flops / (K - 1):.0f}, fresh factorization: {fresh_cost.flops:.0f}")

# Decision feedback replaces the variance of symbol k-1 by the smaller
# posterior variance: a rank-1 downdate of the factor.
k = K // 2
H = window_channel(channel, k, N_p, N_d)
v = window_var(k)
f = chol_init(WindowedCovSpec(0.1, H, v))
g = chol_rank1_dfe(f, v[N_pp - 1], 0.05, H[:, N_pp - 1])
v[N_pp - 1] = 0.05
err = np.abs(g.covariance() - WindowedCovSpec(0.1, H, v).covariance()).max()
print(f"rank-1 variance swap, covariance error: {err:.1e}")
