"""
Log-domain BCJR decoder for terminated rate-1/2 RSC codes.
"""

from dataclasses import dataclass
from itertools import product

import numpy as np
from numba import njit
from scipy.special import logsumexp

from .mapping import LLR_CLIP
from .txchain import LengthMismatch, rsc_encode

NEG = -1e30


@dataclass(frozen=True)
class Trellis:
    """State machine of an RSC encoder.

    ``next_state[s, u]`` and ``outputs[s, u] = (systematic, parity)``.
    """

    num_states: int
    memory: int
    next_state: np.ndarray
    outputs: np.ndarray

    @classmethod
    def from_generator(cls, generator=(7, 5)):
        fb, ff = (int(str(g), 8) for g in generator)
        memory = max(fb.bit_length(), ff.bit_length()) - 1
        S = 1 << memory
        nxt = np.zeros((S, 2), dtype=np.int64)
        out = np.zeros((S, 2, 2), dtype=np.int64)
        # state bit i (LSB first) is the register delayed by i + 1
        for s in range(S):
            reg = [(s >> i) & 1 for i in range(memory)]
            for u in range(2):
                a = u
                for i in range(memory):
                    a ^= ((fb >> (memory - 1 - i)) & 1) & reg[i]
                p = ((ff >> memory) & 1) & a
                for i in range(memory):
                    p ^= ((ff >> (memory - 1 - i)) & 1) & reg[i]
                new = [a] + reg[:-1]
                nxt[s, u] = sum(b << i for i, b in enumerate(new))
                out[s, u] = (u, p)
        return cls(S, memory, nxt, out)


@njit(cache=True)
def _maxstar(a, b):
    if a < b:
        a, b = b, a
    if b <= NEG:
        return a
    return a + np.log1p(np.exp(b - a))


@njit(cache=True)
def _bcjr(La, nxt, outs, n_steps, S, clip):
    # branch metric: sum over the two bits of -c * L, up to a constant
    alpha = np.full((n_steps + 1, S), NEG)
    beta = np.full((n_steps + 1, S), NEG)
    alpha[0, 0] = 0.0
    beta[n_steps, 0] = 0.0
    gam = np.empty((n_steps, S, 2))
    for t in range(n_steps):
        for s in range(S):
            for u in range(2):
                g = 0.0
                for j in range(2):
                    if outs[s, u, j] == 1:
                        g -= La[2 * t + j]
                gam[t, s, u] = g
    for t in range(n_steps):
        for s in range(S):
            a = alpha[t, s]
            if a <= NEG:
                continue
            for u in range(2):
                ns = nxt[s, u]
                alpha[t + 1, ns] = _maxstar(alpha[t + 1, ns], a + gam[t, s, u])
        m = alpha[t + 1].max()
        for s in range(S):
            if alpha[t + 1, s] > NEG:
                alpha[t + 1, s] -= m
    for t in range(n_steps - 1, -1, -1):
        for s in range(S):
            acc = NEG
            for u in range(2):
                b = beta[t + 1, nxt[s, u]]
                if b > NEG:
                    acc = _maxstar(acc, gam[t, s, u] + b)
            beta[t, s] = acc
        m = beta[t].max()
        for s in range(S):
            if beta[t, s] > NEG:
                beta[t, s] -= m
    post = np.zeros(2 * n_steps)
    for t in range(n_steps):
        for j in range(2):
            l0 = NEG
            l1 = NEG
            for s in range(S):
                a = alpha[t, s]
                if a <= NEG:
                    continue
                for u in range(2):
                    b = beta[t + 1, nxt[s, u]]
                    if b <= NEG:
                        continue
                    m = a + gam[t, s, u] + b
                    if outs[s, u, j] == 0:
                        l0 = _maxstar(l0, m)
                    else:
                        l1 = _maxstar(l1, m)
            v = l0 - l1
            if v > clip:
                v = clip
            elif v < -clip:
                v = -clip
            post[2 * t + j] = v
    return post


def bcjr_decode(prior_llrs, trellis=None, n_info=None):
    """SISO decoding of one terminated codeword.

    Parameters
    ----------
    prior_llrs : array_like, shape (2 * (K_b + memory),)
        Channel/prior LLRs on the coded bits, interleaved ``(u, p)`` order.
    trellis : Trellis, optional
        Defaults to the (7, 5) code.
    n_info : int, optional
        ``K_b``; inferred from the length when omitted.

    Returns
    -------
    extrinsic : ndarray
        Posterior minus prior LLR per coded bit, clipped to ``+-LLR_CLIP``.
    info_bits : ndarray of int8
        Hard decisions on the ``K_b`` information bits.
    posterior : ndarray
        Posterior LLRs per coded bit.
    """
    if trellis is None:
        trellis = Trellis.from_generator()
    La = np.clip(np.asarray(prior_llrs, dtype=float), -LLR_CLIP, LLR_CLIP)
    if La.size % 2:
        raise LengthMismatch("coded block length must be even")
    n_steps = La.size // 2
    if n_info is None:
        n_info = n_steps - trellis.memory
    if n_info + trellis.memory != n_steps:
        raise LengthMismatch(f"{La.size} coded bits do not carry {n_info} info bits")
    raw = _bcjr(La, trellis.next_state, trellis.outputs, n_steps, trellis.num_states, np.inf)
    ext = np.clip(raw - La, -LLR_CLIP, LLR_CLIP)
    post = np.clip(raw, -LLR_CLIP, LLR_CLIP)
    info = (post[0 : 2 * n_info : 2] < 0).astype(np.int8)
    return ext, info, post


def brute_force_decode(prior_llrs, n_info, generator=(7, 5)):
    """Exact extrinsic LLRs by enumerating all ``2**n_info`` codewords."""
    La = np.clip(np.asarray(prior_llrs, dtype=float), -LLR_CLIP, LLR_CLIP)
    words = np.array([rsc_encode(u, generator) for u in product((0, 1), repeat=n_info)])
    logp = -(words * La).sum(axis=1)[:, None]
    zero = logsumexp(np.where(words == 0, logp, -np.inf), axis=0)
    one = logsumexp(np.where(words == 1, logp, -np.inf), axis=0)
    return np.clip(zero - one - La, -LLR_CLIP, LLR_CLIP)
