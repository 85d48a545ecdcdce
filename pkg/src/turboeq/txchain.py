"""
BICM transmitter and multipath channel.

Chain: info bits -> terminated RSC encoder -> interleaver -> Gray mapper ->
L-tap (possibly time-varying) filter -> complex AWGN.

Tap storage: ``ChannelModel.taps`` has shape ``(K + L - 1, L)`` and row ``n``
holds the taps producing output sample ``n``, so
``y[n] = sum_l taps[n, l] * x[n - l] + w[n]``.
"""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .numerics import DimensionMismatch


class LengthMismatch(ValueError):
    pass


PRESETS = {
    "proakis-c": np.array([1, 2, 3, 2, 1], dtype=complex) / np.sqrt(19),
    "awgn": np.array([1], dtype=complex),
}


def channel_preset(name):
    """Unit-energy tap vector of a named static channel."""
    try:
        return PRESETS[name.lower()].copy()
    except KeyError:
        raise ValueError(f"unknown channel preset {name!r}") from None


def load_taps(path):
    """Read taps from a text file with one ``real imag`` pair per line.

    Blank lines and ``#`` comments are skipped; commas also separate fields.
    """
    taps = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].replace(",", " ").strip()
            if not line:
                continue
            parts = line.split()
            re = float(parts[0])
            im = float(parts[1]) if len(parts) > 1 else 0.0
            taps.append(complex(re, im))
    if not taps:
        raise ValueError(f"no taps found in {path}")
    return np.array(taps)


@dataclass
class TransmissionConfig:
    """Block sizes of one BICM frame.

    ``K_c`` includes the trellis termination; ``K`` rounds ``K_c / q`` up,
    the missing bits being zero padding.
    """

    K_b: int
    q: int
    memory: int = 2
    code_rate: Fraction = Fraction(1, 2)
    symbol_power: float = 1.0

    @property
    def K_c(self):
        return int((self.K_b + self.memory) / self.code_rate)

    @property
    def K(self):
        return -(-self.K_c // self.q)

    @property
    def effective_rate(self):
        """Info bits per coded bit, termination included."""
        return self.K_b / self.K_c


@dataclass
class ChannelModel:
    taps: np.ndarray
    noise_variance: float
    time_varying: bool = False

    @property
    def L(self):
        return self.taps.shape[1]

    @property
    def block_length(self):
        return self.taps.shape[0] - self.L + 1

    @classmethod
    def static(cls, h, K, noise_variance):
        h = np.asarray(h, dtype=complex)
        return cls(np.tile(h, (K + h.size - 1, 1)), float(noise_variance), False)

    def energy(self, k=None):
        """Per-sample tap energy, ``||h_k||^2`` (row average when ``k`` is None)."""
        e = np.sum(np.abs(self.taps) ** 2, axis=1)
        return float(e.mean()) if k is None else float(e[k])


@dataclass
class Interleaver:
    """Seeded Fisher-Yates permutation; ``out[i] = in[perm[i]]``."""

    permutation: np.ndarray
    seed: int | None = None

    @classmethod
    def random(cls, n, seed):
        return cls(np.random.default_rng(seed).permutation(n), seed)

    @classmethod
    def identity(cls, n):
        return cls(np.arange(n), None)

    @property
    def size(self):
        return self.permutation.size


def interleave(bits, il):
    bits = np.asarray(bits)
    if bits.shape[0] != il.size:
        raise LengthMismatch(f"{bits.shape[0]} values for an interleaver of size {il.size}")
    return bits[il.permutation]


def deinterleave(values, il):
    values = np.asarray(values)
    if values.shape[0] != il.size:
        raise LengthMismatch(f"{values.shape[0]} values for an interleaver of size {il.size}")
    out = np.empty_like(values)
    out[il.permutation] = values
    return out


def _octal_taps(g, memory):
    taps = [int(b) for b in bin(int(str(g), 8))[2:]]
    return [0] * (memory + 1 - len(taps)) + taps


def rsc_encode(info, generator=(7, 5)):
    """Terminated rate-1/2 recursive systematic convolutional encoder.

    ``generator = (feedback, feedforward)`` in octal.  Output is interleaved
    ``(u_0, p_0, u_1, p_1, ...)`` followed by ``memory`` tail pairs that drive
    the encoder back to the zero state.
    """
    fb, ff = generator
    memory = max(len(bin(int(str(g), 8))) - 3 for g in generator)
    gfb = _octal_taps(fb, memory)
    gff = _octal_taps(ff, memory)
    state = [0] * memory  # state[0] is the most recent register
    out = []

    def step(u):
        a = (u + sum(gfb[i + 1] * state[i] for i in range(memory))) % 2
        p = (gff[0] * a + sum(gff[i + 1] * state[i] for i in range(memory))) % 2
        state.insert(0, a)
        state.pop()
        return p

    for u in np.asarray(info, dtype=np.int64):
        out += [int(u), step(int(u))]
    for _ in range(memory):
        u = sum(gfb[i + 1] * state[i] for i in range(memory)) % 2
        out += [u, step(u)]
    return np.array(out, dtype=np.int8)


def apply_channel(symbols, ch, rng):
    """Pass ``K`` symbols through the channel; returns ``K + L - 1`` samples.

    ``rng`` is a ``numpy.random.Generator`` or an integer seed.
    """
    x = np.asarray(symbols, dtype=complex)
    K = x.size
    L = ch.L
    if ch.taps.shape[0] != K + L - 1:
        raise DimensionMismatch(f"channel covers {ch.block_length} symbols, got {K}")
    xp = np.concatenate([np.zeros(L - 1, complex), x, np.zeros(L - 1, complex)])
    # column l holds x[n - l] for n = 0 .. K+L-2
    lagged = np.stack([xp[L - 1 - l : L - 1 - l + K + L - 1] for l in range(L)], axis=1)
    y = np.sum(ch.taps * lagged, axis=1)
    if ch.noise_variance > 0:
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        s = np.sqrt(ch.noise_variance / 2)
        y = y + s * (rng.standard_normal(y.size) + 1j * rng.standard_normal(y.size))
    return y


def convolution_matrix(ch):
    """Dense ``(K + L - 1) x K`` matrix with ``y = H x``."""
    K, L = ch.block_length, ch.L
    H = np.zeros((K + L - 1, K), dtype=complex)
    for n in range(K + L - 1):
        for l in range(L):
            if 0 <= n - l < K:
                H[n, n - l] = ch.taps[n, l]
    return H


def window_channel(ch, k, N_p, N_d):
    """Window channel matrix ``H_k`` of shape ``(N, N_p + L + N_d)``.

    Rows are samples ``k - N_p .. k + N_d``, columns symbols
    ``k - N_p' .. k + N_d`` with ``N_p' = N_p + L - 1``; rows outside the
    received block are zero.
    """
    L = ch.L
    N = N_p + N_d + 1
    n_tot = ch.taps.shape[0]
    H = np.zeros((N, N_p + L + N_d), dtype=complex)
    for i in range(N):
        n = k - N_p + i
        if 0 <= n < n_tot:
            H[i, i : i + L] = ch.taps[n, ::-1]
    return H


def ebn0_to_noise_var(ebn0_db, q, rate, symbol_power=1.0, channel_energy=1.0):
    """Noise variance ``sigma_x^2 ||h||^2 / (q R_c Eb/N0)``."""
    return symbol_power * channel_energy / (q * float(rate) * 10.0 ** (ebn0_db / 10.0))
