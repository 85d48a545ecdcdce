"""
EXIT analysis, mutual information utilities, area-theorem rates and the
post-equalization SNR gain of decision feedback over linear IC.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad, trapezoid

from .mapping import LLR_CLIP, constellation
from .txchain import LengthMismatch, ebn0_to_noise_var

J_SIGMA_MAX = 60.0


@dataclass(frozen=True)
class ExitPoint:
    i_a: float
    i_e: float


@dataclass(frozen=True)
class SnrGainReport:
    xi_le: float
    xi_dfe: float
    v_bar: float

    @property
    def G(self):
        return (self.xi_dfe / self.xi_le) * (1 - self.v_bar * self.xi_le) / (1 - self.v_bar * self.xi_dfe)


# ---------------------------------------------------------------------------
# mutual information
# ---------------------------------------------------------------------------


@lru_cache(maxsize=4096)
def j_function(sigma):
    """MI between a bit and a consistent Gaussian LLR ``N(+-sigma^2/2, sigma^2)``."""
    if sigma <= 0:
        return 0.0
    if sigma >= J_SIGMA_MAX:
        return 1.0
    mu = sigma**2 / 2

    def integrand(l):
        pdf = np.exp(-((l - mu) ** 2) / (2 * sigma**2)) / np.sqrt(2 * np.pi * sigma**2)
        return pdf * np.logaddexp(0.0, -l) / np.log(2)

    val, _ = quad(integrand, mu - 12 * sigma, mu + 12 * sigma, limit=200)
    return float(min(1.0, max(0.0, 1.0 - val)))


def j_inverse(mi, tol=1e-6):
    """Bisection inverse of :func:`j_function`."""
    if mi <= 0:
        return 0.0
    if mi >= 1:
        return J_SIGMA_MAX
    lo, hi = 0.0, J_SIGMA_MAX
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if j_function(mid) < mi:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def mi_from_llrs(llrs, bits):
    """Time-average estimate ``1 - mean(log2(1 + exp(-(1 - 2 d) L)))``."""
    llrs = np.asarray(llrs, dtype=float).reshape(-1)
    bits = np.asarray(bits).reshape(-1)
    if llrs.size != bits.size:
        raise LengthMismatch(f"{llrs.size} LLRs for {bits.size} bits")
    if llrs.size == 0:
        return 0.0
    signed = (1.0 - 2.0 * bits) * llrs
    val = 1.0 - np.mean(np.logaddexp(0.0, -signed)) / np.log(2)
    return float(min(1.0, max(0.0, val)))


def generate_prior_llrs(i_a, bits, rng):
    """Consistent Gaussian LLRs carrying ``i_a`` bits of information per bit."""
    bits = np.asarray(bits)
    sgn = 1.0 - 2.0 * bits
    if i_a <= 0:
        return np.zeros(bits.shape)
    if i_a >= 1:
        return sgn * LLR_CLIP
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    s = j_inverse(i_a)
    return np.clip(sgn * (s**2 / 2 + s * rng.standard_normal(bits.shape)), -LLR_CLIP, LLR_CLIP)


# ---------------------------------------------------------------------------
# EXIT
# ---------------------------------------------------------------------------


def exit_curve(receiver, h, const_name, ebn0_db, grid, frames=2000, K=512, rate=0.5, seed=0,
               window=None, self_iters=0, beta=0.0):
    """Monte Carlo EXIT curve of equalizer plus demapper.

    Each frame carries ``K`` uniformly random symbols with Gaussian prior
    LLRs of mutual information ``I_A``; ``I_E`` is measured on the extrinsic
    LLRs.  ``rate`` enters only the ``E_b/N_0`` to noise conversion.
    """
    from . import equalizer as eq
    from .link import frame_rng
    from .txchain import ChannelModel, apply_channel

    c = constellation(const_name)
    h = np.asarray(h, dtype=complex)
    noise = ebn0_to_noise_var(ebn0_db, c.q, rate, 1.0, float(np.sum(np.abs(h) ** 2)))
    ch = ChannelModel.static(h, K, noise)
    out = []
    for gi, i_a in enumerate(grid):
        num = 0.0
        for f in range(frames):
            rng = frame_rng(seed, gi, f)
            bits = rng.integers(0, 2, K * c.q).astype(np.int8)
            y = apply_channel(c.map_bits(bits), ch, rng)
            La = generate_prior_llrs(i_a, bits, rng)
            fr = eq.Frame(y, ch.taps, noise, c)
            res = eq.equalize(receiver, fr, La.reshape(K, c.q), window, self_iters=self_iters, beta=beta)
            num += mi_from_llrs(res.llrs, bits)
        out.append(ExitPoint(float(i_a), num / max(frames, 1)))
    return out


def mi_trajectory(cfg, ebn0_db, frames=100, seed=0):
    """Average ``(I_A, I_E)`` of the equalizer at each turbo iteration."""
    from .link import frame_rng, transmit, turbo_receive

    acc = None
    for f in range(frames):
        rng = frame_rng(seed, 0, f)
        res = turbo_receive(cfg, transmit(cfg, ebn0_db, rng))
        acc = res.mi if acc is None else acc + res.mi
    return [tuple(row) for row in acc / frames]


def achievable_rate(curve, q):
    """``q`` times the area under an EXIT curve spanning ``I_A`` in [0, 1]."""
    pts = sorted(curve, key=lambda p: p.i_a)
    ia = np.array([p.i_a for p in pts])
    ie = np.array([p.i_e for p in pts])
    if ia.size < 2 or ia[0] > 1e-9 or ia[-1] < 1 - 1e-9:
        raise ValueError("EXIT curve must cover I_A = 0 and I_A = 1")
    return float(q * trapezoid(ie, ia))


# ---------------------------------------------------------------------------
# SNR gain
# ---------------------------------------------------------------------------


def _window_xi(h, window, noise, var_window):
    """``xi = h^H Sigma^{-1} h`` of one interior window."""
    from .txchain import window_channel, ChannelModel

    L = len(h)
    K = window.N_pp(L) + window.N_d + window.N + 1
    ch = ChannelModel.static(h, K, noise)
    k = window.N_pp(L) + 1
    Hk = window_channel(ch, k, window.N_p, window.N_d)
    S = noise * np.eye(Hk.shape[0]) + (Hk * var_window) @ Hk.conj().T
    col = Hk[:, window.N_pp(L)]
    return float(np.real(np.vdot(col, np.linalg.solve(S, col))))


def snr_gain(h, window, v_a, v_c, noise_variance, k_w=1.0):
    """Gain of decision feedback with causal variance ``v_c`` over LE-IC.

    Both receivers use homogeneous anti-causal variances ``v_a``; the
    decision feedback receiver swaps the ``N_p'`` causal ones for ``v_c``.
    Interior (edge-free) windows only.
    """
    h = np.asarray(h, dtype=complex)
    W = window.N_pp(h.size) + window.N_d + 1
    npp = window.N_pp(h.size)
    v_le = np.full(W, float(v_a))
    v_dfe = v_le.copy()
    v_dfe[:npp] = v_c
    noise = k_w * noise_variance
    return SnrGainReport(_window_xi(h, window, noise, v_le), _window_xi(h, window, noise, v_dfe), float(v_a))


def snr_gain_monte_carlo(h, window, draw_a, draw_c, noise_variance, n_windows, rng, k_w=1.0):
    """Direct ratio ``E[v^e_le] / E[v^e_dfe]`` with random per-symbol variances.

    ``draw_a(rng, n)`` and ``draw_c(rng, n)`` return prior and decision
    variances.  Returns ``(ratio, report)`` where ``report`` carries the
    averaged ``xi`` values and ``v_bar`` so that ``report.G`` is the
    closed-form prediction.
    """
    h = np.asarray(h, dtype=complex)
    npp = window.N_pp(h.size)
    W = npp + window.N_d + 1
    noise = k_w * noise_variance
    ve_le = ve_dfe = xi_le = xi_dfe = vbar = 0.0
    for _ in range(n_windows):
        va = draw_a(rng, W)
        vd = va.copy()
        vd[:npp] = draw_c(rng, npp)
        a = _window_xi(h, window, noise, va)
        b = _window_xi(h, window, noise, vd)
        ve_le += 1 / a - va[npp]
        ve_dfe += 1 / b - va[npp]
        xi_le += a
        xi_dfe += b
        vbar += va[npp]
    n = n_windows
    return ve_le / ve_dfe, SnrGainReport(xi_le / n, xi_dfe / n, vbar / n)
