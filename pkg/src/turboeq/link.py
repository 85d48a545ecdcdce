"""
End-to-end BICM turbo link: one frame through transmitter, channel and the
iterative equalizer/decoder loop.
"""

from dataclasses import dataclass, field

import numpy as np

from . import equalizer as eq
from .analysis import mi_from_llrs
from .decoder import Trellis, bcjr_decode
from .mapping import constellation
from .txchain import (
    ChannelModel,
    Interleaver,
    apply_channel,
    deinterleave,
    ebn0_to_noise_var,
    interleave,
    rsc_encode,
)


def frame_rng(seed, snr_index, frame_index):
    """Counter-based stream for one (seed, SNR point, frame) cell."""
    ss = np.random.SeedSequence([int(seed), int(snr_index), int(frame_index)])
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class LinkConfig:
    """Static-channel link setup.

    ``generator = None`` sends the info bits uncoded (no decoder).
    ``receiver`` is any name accepted by :func:`turboeq.equalizer.equalize`
    or ``"mfb"`` (genie with all interference removed).
    """

    h: np.ndarray
    constellation: str = "bpsk"
    K_b: int = 2048
    generator: tuple | None = (7, 5)
    receiver: str = "dfe-ic-ep"
    window: eq.WindowConfig | None = None
    schedule: eq.EpSchedule = field(default_factory=eq.EpSchedule)

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=complex)
        self.const = constellation(self.constellation)
        if self.window is None:
            self.window = eq.WindowConfig.default(self.h.size)
        self.trellis = Trellis.from_generator(self.generator) if self.generator else None

    @property
    def coded_bits(self):
        if self.trellis is None:
            return self.K_b
        return 2 * (self.K_b + self.trellis.memory)

    @property
    def K(self):
        return -(-self.coded_bits // self.const.q)

    @property
    def rate(self):
        """Info bits per transmitted bit, termination and padding included."""
        return self.K_b / (self.K * self.const.q)

    def noise_variance(self, ebn0_db):
        energy = float(np.sum(np.abs(self.h) ** 2))
        return ebn0_to_noise_var(ebn0_db, self.const.q, self.rate, 1.0, energy)


@dataclass
class Transmission:
    info: np.ndarray
    coded: np.ndarray
    interleaver: Interleaver
    bits: np.ndarray
    symbols: np.ndarray
    frame: eq.Frame


@dataclass
class TurboResult:
    """Per-turbo-iteration outcome of one frame.

    ``bit_errors[t]`` counts info-bit errors after iteration ``t``;
    ``mi`` holds ``(I_A, I_E)`` of the equalizer at each iteration.
    """

    bit_errors: np.ndarray
    mi: np.ndarray
    neg_variance: int = 0


def transmit(cfg, ebn0_db, rng):
    """Draw info bits, encode, interleave, map and pass through the channel."""
    c = cfg.const
    info = rng.integers(0, 2, cfg.K_b).astype(np.int8)
    coded = rsc_encode(info, cfg.generator) if cfg.trellis is not None else info.copy()
    il = Interleaver(rng.permutation(coded.size))
    bits = np.zeros(cfg.K * c.q, dtype=np.int8)
    bits[: coded.size] = interleave(coded, il)
    symbols = c.map_bits(bits)
    noise = cfg.noise_variance(ebn0_db)
    ch = ChannelModel.static(cfg.h, cfg.K, noise)
    y = apply_channel(symbols, ch, rng)
    return Transmission(info, coded, il, bits, symbols, eq.Frame(y, ch.taps, noise, c))


def _equalize(cfg, tx, La, tau):
    sch = cfg.schedule
    if cfg.receiver == "mfb":
        return eq.run_mfb(tx.frame, tx.symbols, La, cfg.window)
    return eq.equalize(cfg.receiver, tx.frame, La, cfg.window,
                       self_iters=sch.self_iters_at(tau), beta=sch.beta_at(tau))


def turbo_receive(cfg, tx):
    """Run turbo iterations ``tau = 0 .. T`` on one transmission."""
    c = cfg.const
    n = tx.coded.size
    T = cfg.schedule.turbo_iters if cfg.trellis is not None else 0
    La = np.zeros(cfg.K * c.q)
    errors = np.zeros(T + 1, dtype=np.int64)
    mi = np.zeros((T + 1, 2))
    neg = 0
    for tau in range(T + 1):
        out = _equalize(cfg, tx, La.reshape(cfg.K, c.q), tau)
        neg += out.neg_variance
        Le = out.llrs.reshape(-1)
        mi[tau] = (mi_from_llrs(La[:n], tx.bits[:n]), mi_from_llrs(Le[:n], tx.bits[:n]))
        if cfg.trellis is None:
            errors[tau] = int(np.sum((Le[:n] < 0) != tx.bits[:n]))
            break
        ext, info_hat, _ = bcjr_decode(deinterleave(Le[:n], tx.interleaver), cfg.trellis, cfg.K_b)
        errors[tau] = int(np.sum(info_hat != tx.info))
        La = np.zeros(cfg.K * c.q)
        La[:n] = interleave(ext, tx.interleaver)
    return TurboResult(errors, mi, neg)
