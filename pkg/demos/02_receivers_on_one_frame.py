"""
All receivers on one Proakis-C frame
====================================

One BPSK block crosses the Proakis-C channel.  Every equalizer then runs once
without decoder feedback, the situation of the first turbo iteration.  The
script reports the mean squared error of the extrinsic estimates next to the
variance each receiver claims, and the raw bit error rate of the extrinsic
LLRs.
"""

import numpy as np

from turboeq.equalizer import RECEIVERS, Frame, equalize
from turboeq.mapping import constellation
from turboeq.txchain import ChannelModel, apply_channel, channel_preset, ebn0_to_noise_var

rng = np.random.default_rng(1)
c = constellation("bpsk")
h = channel_preset("proakis-c")

# Uncoded Eb/N0 of 8 dB, i.e. Es/N0 for BPSK.
K = 4096
noise = ebn0_to_noise_var(8.0, c.q, 1.0)
channel = ChannelModel.static(h, K, noise)
bits = rng.integers(0, 2, K)
x = c.map_bits(bits)
y = apply_channel(x, channel, rng)
frame = Frame(y, channel.taps, noise, c)

print(f"{'receiver':14s} {'MSE':>8s} {'mean v^e':>9s} {'BER':>8s}")
for name in RECEIVERS:
    out = equalize(name, frame, self_iters=3 if name.startswith("si-") else 0, beta=0.3)
    mse = np.mean(np.abs(out.xe.real - x.real) ** 2)
    ber = np.mean((out.llrs[:, 0] < 0) != bits.astype(bool))
    print(f"{name:14s} {mse:8.4f} {np.mean(out.ve):9.4f} {ber:8.4f}")

# Feedback of past decisions sharpens the DFE estimates.  Single-pass LE-IC,
# DFE-IC EP and APP report variances close to their MSE.  PAPP understates
# its error, HAPP overstates it, and self-iterated DFE-IC EP ends up
# overconfident without decoder help.
