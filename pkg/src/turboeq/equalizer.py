"""
Sliding-window MMSE FIR equalizers with soft interference cancellation.

For symbol ``k`` the receiver observes ``y_k = H_k x_k + w_k`` over the
samples ``k - N_p .. k + N_d`` and cancels interference with per-symbol
means/variances ``(xbar, vbar)`` over the symbols ``k - N_p' .. k + N_d``:

    Sigma = k_w sigma_w^2 I + H_k diag(vbar) H_k^H,  h = H_k[:, N_p'],
    xi    = h^H Sigma^{-1} h,                         f = Sigma^{-1} h / xi,
    x^e   = xbar_k + f^H (y_k - H_k xbar),           v^e = 1/xi - vbar_k.

Receivers differ only in what fills the causal part (``k - N_p' .. k - 1``)
of ``(xbar, vbar)``:

============  ================================================================
le-ic         prior moments everywhere
si-le-ic      EP feedback of the previous self-iteration everywhere (parallel)
dfe-ic-ep     EP feedback of the current self-iteration (serial)
dfe-ic-app    posterior moments ``(mu, gamma)``
dfe-ic-papp   posterior means, zero variance
dfe-ic-happ   as PAPP, ``v^e`` inflated by the decision error variance
dfe-hard      hard decisions, zero variance (classical DFE)
============  ================================================================

The Cholesky factor of ``Sigma`` is carried from symbol to symbol: a window
slide (append the new observation, drop the oldest) followed, for decision
feedback receivers, by one rank-1 update/downdate moving symbol ``k - 1``
from its anti-causal to its causal variance.
"""

from dataclasses import dataclass, field
from math import sqrt

import numpy as np
from numba import njit

from .mapping import (
    PMF_FLOOR,
    Constellation,
    damp_block,
    divide_block,
    extrinsic_llrs_block,
    moments_block,
    posterior_pmf_block,
    prior_log_block,
    prior_pmf_block,
)
from .numerics import (
    NotPositiveDefinite,
    _append_drop,
    _backward_solve,
    _chol_banded,
    _forward_solve,
    _rank1,
    chol_init,
    chol_solve,
    WindowedCovSpec,
)

VE_FLOOR = 1e-12

MODE_LE = 0
MODE_EP = 1
MODE_APP = 2
MODE_PAPP = 3
MODE_HAPP = 4
MODE_HARD = 5

RECEIVERS = (
    "le-ic",
    "si-le-ic",
    "dfe-ic-ep",
    "si-dfe-ic-ep",
    "dfe-ic-app",
    "dfe-ic-papp",
    "dfe-ic-happ",
)


@dataclass(frozen=True)
class WindowConfig:
    """Pre-cursor ``N_p`` and post-cursor ``N_d`` sample counts."""

    N_p: int
    N_d: int

    def __post_init__(self):
        if self.N_p < 0 or self.N_d < 0:
            raise ValueError("window lengths must be nonnegative")

    @classmethod
    def default(cls, L):
        """``N = 3 L + 2`` samples with ``N_d = 2 L``."""
        return cls(L + 1, 2 * L)

    @property
    def N(self):
        return self.N_p + self.N_d + 1

    def N_pp(self, L):
        return self.N_p + L - 1


@dataclass
class IcVectors:
    means: np.ndarray
    variances: np.ndarray


@dataclass
class FirOutput:
    mean: complex
    variance: float


@dataclass
class EpSchedule:
    """Turbo/self-iteration schedule.

    ``self_iters`` is an int or a per-turbo-iteration sequence (the last
    entry repeats).  ``beta`` is a float, a sequence indexed by turbo
    iteration, or a callable ``beta(tau)``.
    """

    turbo_iters: int = 0
    self_iters: object = 0
    beta: object = 0.0

    def self_iters_at(self, tau):
        s = self.self_iters
        if np.isscalar(s):
            return int(s)
        return int(s[min(tau, len(s) - 1)])

    def beta_at(self, tau):
        b = self.beta
        if callable(b):
            val = float(b(tau))
        elif np.isscalar(b):
            val = float(b)
        else:
            val = float(b[min(tau, len(b) - 1)])
        if not 0.0 <= val <= 1.0:
            raise ValueError(f"damping beta={val} outside [0, 1]")
        return val


@dataclass(frozen=True)
class ExpBetaSchedule:
    """Damping ``min(cap, 1 - exp(tau / scale) / 10)`` clamped at 0."""

    cap: float
    scale: float

    def __call__(self, tau):
        return max(0.0, min(self.cap, 1.0 - np.exp(tau / self.scale) / 10.0))


@dataclass
class Frame:
    """Received block with perfect channel knowledge.

    ``taps`` has shape ``(K + L - 1, L)`` (see :mod:`turboeq.txchain`).
    """

    y: np.ndarray
    taps: np.ndarray
    noise_variance: float
    constellation: Constellation

    @property
    def L(self):
        return self.taps.shape[1]

    @property
    def K(self):
        return self.taps.shape[0] - self.L + 1


@dataclass
class EqualizerOutput:
    """Per-symbol equalizer results of one receiver call.

    ``llrs`` has shape (K, q); ``posterior`` holds the PMFs ``D_k`` the LLRs
    come from.  ``neg_variance`` counts Gaussian divisions that came out
    improper, ``refactorizations`` counts factor updates that had to be
    replaced by a fresh factorization.
    """

    xe: np.ndarray
    ve: np.ndarray
    llrs: np.ndarray
    posterior: np.ndarray
    neg_variance: int = 0
    refactorizations: int = 0
    feedback: tuple = field(default=None, repr=False)


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------


@njit(cache=True)
def _fill_cov(taps, k, Np, N, L, vb, noise, S):
    ntot = taps.shape[0]
    for i in range(N):
        for j in range(N):
            S[i, j] = 0.0
    for i in range(N):
        S[i, i] = noise
        ni = k - Np + i
        if ni < 0 or ni >= ntot:
            continue
        for j in range(max(0, i - L + 1), i + 1):
            nj = k - Np + j
            if nj < 0:
                continue
            acc = 0j
            for m in range(i, j + L):
                acc += taps[ni, i - m + L - 1] * vb[m] * np.conj(taps[nj, j - m + L - 1])
            S[i, j] += acc
            if j < i:
                S[j, i] += np.conj(acc)


@njit(cache=True)
def _hcol(taps, k, Np, N, L, m, out):
    """Column ``m`` of ``H_k``."""
    ntot = taps.shape[0]
    for i in range(N):
        out[i] = 0.0
    for i in range(max(0, m - L + 1), min(N, m + 1)):
        n = k - Np + i
        if 0 <= n < ntot:
            out[i] = taps[n, i - m + L - 1]


@njit(cache=True)
def _demap(logprior_k, points, kw, xe, ve, w):
    """Posterior PMF into ``w``; returns (mean, variance)."""
    M = points.size
    mx = -np.inf
    for m in range(M):
        d = points[m] - xe
        w[m] = logprior_k[m] - kw * (d.real * d.real + d.imag * d.imag) / ve
        if w[m] > mx:
            mx = w[m]
    tot = 0.0
    for m in range(M):
        e = np.exp(w[m] - mx)
        if e < PMF_FLOOR:
            e = 0.0
        w[m] = e
        tot += e
    mu = 0j
    for m in range(M):
        w[m] /= tot
        mu += w[m] * points[m]
    var = 0.0
    for m in range(M):
        d = points[m] - mu
        var += w[m] * (d.real * d.real + d.imag * d.imag)
    return mu, var


@njit(cache=True)
def _fir_pass(y, taps, K, Np, Nd, noise, xa, va, mode, logprior, points, kw, beta, bw_opt, ops,
              xe, ve, ve_raw, xf, vf, flag):
    """One serial sweep ``k = 0 .. K-1``; returns the refactorization count.

    ``xa, va``: anti-causal messages (prior moments or previous SI feedback).
    Outputs ``xf, vf`` are the messages fed back for later symbols, ``flag``
    marks improper Gaussian divisions.  Returns -1 on factorization failure.
    """
    L = taps.shape[1]
    N = Np + Nd + 1
    Npp = Np + L - 1
    W = Npp + Nd + 1
    ntot = taps.shape[0]
    M = points.size
    bw = bw_opt if bw_opt >= 0 else N
    dfe = mode != MODE_LE
    q = 0
    while (1 << q) < M:
        q += 1

    xc = np.zeros(K, dtype=np.complex128)
    vfac = np.zeros(K)
    gam = np.zeros(K)
    vb = np.zeros(W)
    for m in range(Npp, W):
        s = m - Npp
        if s < K:
            vb[m] = va[s]
    S = np.empty((N, N), dtype=np.complex128)
    Lf = np.empty((N, N), dtype=np.complex128)
    Ln = np.empty((N, N), dtype=np.complex128)
    c = np.zeros(N, dtype=np.complex128)
    col = np.zeros(N, dtype=np.complex128)
    u = np.zeros(N, dtype=np.complex128)
    f = np.zeros(N, dtype=np.complex128)
    pw = np.zeros(M)
    refactor = 0

    _fill_cov(taps, 0, Np, N, L, vb, noise, S)
    if _chol_banded(S, Lf, bw, ops) != 0:
        return -1

    for k in range(K):
        if k > 0:
            nn = k + Nd
            vnew = va[nn] if nn < K else 0.0
            for i in range(N):
                c[i] = 0.0
            d = noise
            if nn < ntot:
                for i in range(max(0, N - L + 1), N):
                    n = k - 1 - Np + i
                    if n < 0 or n >= ntot:
                        continue
                    acc = 0j
                    for x in range(nn - L + 1, n + 1):
                        acc += taps[n, n - x] * vb[x - (k - 1 - Npp)] * np.conj(taps[nn, nn - x])
                    c[i] = acc
                    ops[0] += 10 * (n - nn + L)
            for m in range(W - 1):
                vb[m] = vb[m + 1]
            vb[W - 1] = vnew
            if nn < ntot:
                for l in range(L):
                    z = taps[nn, l]
                    d += (z.real * z.real + z.imag * z.imag) * vb[W - 1 - l]
                ops[0] += 4 * L + 1
            st = _append_drop(Lf, c, d, Ln, bw, ops)
            tmp = Lf
            Lf = Ln
            Ln = tmp
            # with N_p' = 0 the window holds no causal symbol
            if dfe and Npp > 0:
                vold = vb[Npp - 1]
                vnew_c = vfac[k - 1]
                vb[Npp - 1] = vnew_c
                if st == 0 and vnew_c != vold:
                    delta = vnew_c - vold
                    _hcol(taps, k, Np, N, L, Npp - 1, col)
                    r = sqrt(abs(delta))
                    for i in range(N):
                        col[i] *= r
                    ops[0] += 2 * min(L, N) + 1
                    st = _rank1(Lf, col, 1 if delta > 0 else -1, bw, ops)
            if st != 0:
                refactor += 1
                _fill_cov(taps, k, Np, N, L, vb, noise, S)
                if _chol_banded(S, Lf, bw, ops) != 0:
                    return -1

        # filter
        _hcol(taps, k, Np, N, L, Npp, col)
        _forward_solve(Lf, col, u, Np if Np < N else N, bw, ops)
        xi = 0.0
        for i in range(N):
            xi += u[i].real * u[i].real + u[i].imag * u[i].imag
        _backward_solve(Lf, u, f, bw, ops)
        for i in range(N):
            f[i] /= xi
        ops[0] += 4 * (N - min(Np, N)) + 2 * N + 1

        # interference-cancelled estimate
        acc = 0j
        for i in range(N):
            n = k - Np + i
            if n < 0 or n >= ntot:
                continue
            r = y[n]
            for l in range(L):
                x = n - l
                if x < 0 or x >= K:
                    continue
                mx = xc[x] if (dfe and x < k) else xa[x]
                r -= taps[n, l] * mx
            acc += np.conj(f[i]) * r
        ops[0] += 8 * N * L + 2 * N + 8 * N + 6
        est = xa[k] + acc
        var = 1.0 / xi - vb[Npp]
        if var < VE_FLOOR:
            var = VE_FLOOR
        xe[k] = est
        ve[k] = var
        ve_raw[k] = var
        if not dfe:
            continue

        ops[0] += 3 * M * q + 22 * M + 20
        if mode == MODE_HAPP:
            infl = 0.0
            for m in range(Npp):
                x = k - Npp + m
                if x < 0:
                    continue
                g = 0j
                for i in range(max(0, m - L + 1), min(N, m + 1)):
                    n = k - Np + i
                    if 0 <= n < ntot:
                        g += np.conj(taps[n, i - m + L - 1]) * f[i]
                infl += (g.real * g.real + g.imag * g.imag) * gam[x]
            ops[0] += Npp * (8 * L + 4)
            ve[k] = var + infl
        mu, gm = _demap(logprior[k], points, kw, est, var, pw)
        flag[k] = 0
        if mode == MODE_EP:
            if gm < var:
                den = var - gm
                xs = (mu * var - est * gm) / den
                vs = var * gm / den
                xp = xa[k]
                vp = va[k]
                if beta == 0.0:
                    xn = xs
                    vn = vs
                elif beta == 1.0 or vp <= 0.0:
                    xn = xp
                    vn = vp
                elif vs <= 0.0:
                    xn = xs
                    vn = 0.0
                else:
                    ln = (1.0 - beta) / vs
                    lp = beta / vp
                    vn = 1.0 / (ln + lp)
                    xn = vn * (ln * xs + lp * xp)
                xf[k] = xn
                vf[k] = vn
            else:
                xf[k] = mu
                vf[k] = gm
                flag[k] = 1
            xc[k] = xf[k]
            vfac[k] = vf[k]
        elif mode == MODE_APP:
            xc[k] = mu
            vfac[k] = gm
            xf[k] = mu
            vf[k] = gm
        elif mode == MODE_HARD:
            best = 0
            for m in range(1, M):
                if pw[m] > pw[best]:
                    best = m
            xc[k] = points[best]
            xf[k] = points[best]
            vf[k] = 0.0
        else:
            xc[k] = mu
            gam[k] = gm
            xf[k] = mu
            vf[k] = gm
    return refactor


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------


class _Priors:
    def __init__(self, La, c, K):
        if La is None:
            La = np.zeros((K, c.q))
        self.La = np.asarray(La, dtype=float).reshape(K, c.q)
        self.pmf = prior_pmf_block(self.La, c)
        self.logpmf = np.log(np.maximum(self.pmf, PMF_FLOOR))
        self.mean, self.var = moments_block(self.pmf, c)


def _sweep(frame, window, mode, xa, va, priors, beta=0.0, banded=True, counter=None):
    c = frame.constellation
    K = frame.K
    out = [np.zeros(K, complex), np.zeros(K), np.zeros(K), np.zeros(K, complex), np.zeros(K),
           np.zeros(K, np.int8)]
    ops = counter.ops if counter is not None else np.zeros(1, np.int64)
    ref = _fir_pass(
        np.ascontiguousarray(frame.y, dtype=np.complex128),
        np.ascontiguousarray(frame.taps, dtype=np.complex128),
        K, window.N_p, window.N_d, c.k_w * frame.noise_variance,
        np.ascontiguousarray(xa, dtype=np.complex128), np.ascontiguousarray(va, dtype=float),
        mode, priors.logpmf, c.points.astype(np.complex128), c.k_w, float(beta),
        frame.L - 1 if banded else -1, ops, *out,
    )
    if ref < 0:
        raise NotPositiveDefinite("window covariance lost positive definiteness")
    return out, ref


def _finish(frame, priors, xe, ve, **kw):
    c = frame.constellation
    D = posterior_pmf_block(priors.pmf, xe, ve, c)
    Le = extrinsic_llrs_block(D, priors.La, c)
    return EqualizerOutput(xe, ve, Le, D, **kw)


def run_le_ic(frame, La=None, window=None, banded=True, counter=None):
    """Turbo LE-IC: prior moments cancel interference at every position."""
    window = window or WindowConfig.default(frame.L)
    pri = _Priors(La, frame.constellation, frame.K)
    (xe, ve, *_), ref = _sweep(frame, window, MODE_LE, pri.mean, pri.var, pri, banded=banded,
                               counter=counter)
    return _finish(frame, pri, xe, ve, refactorizations=ref)


def run_mfb(frame, symbols, La=None, window=None):
    """Genie receiver with every interferer known: matched-filter bound."""
    window = window or WindowConfig.default(frame.L)
    pri = _Priors(La, frame.constellation, frame.K)
    K = frame.K
    (xe, ve, *_), ref = _sweep(frame, window, MODE_LE, np.asarray(symbols, complex), np.zeros(K), pri)
    return _finish(frame, pri, xe, ve, refactorizations=ref)


def run_si_le_ic(frame, La=None, window=None, self_iters=0, beta=0.0, banded=True, counter=None):
    """Self-iterated LE-IC with a parallel schedule.

    Every self-iteration equalizes the whole block with the EP feedback of
    the previous one (prior moments at ``s = 0``), then demaps, divides and
    damps.  Improper divisions keep the previous message.
    """
    window = window or WindowConfig.default(frame.L)
    c = frame.constellation
    pri = _Priors(La, c, frame.K)
    xd, vd = pri.mean.copy(), pri.var.copy()
    neg = 0
    ref = 0
    for s in range(self_iters + 1):
        (xe, ve, *_), r = _sweep(frame, window, MODE_LE, xd, vd, pri, banded=banded, counter=counter)
        ref += r
        if s == self_iters:
            break
        D = posterior_pmf_block(pri.pmf, xe, ve, c)
        mu, gm = moments_block(D, c)
        xs, vs, ok = divide_block(mu, gm, xe, ve)
        neg += int(np.sum(~ok))
        xn, vn = damp_block(np.where(ok, xs, 0), np.where(ok, vs, 1.0), xd, vd, beta)
        xd = np.where(ok, xn, xd)
        vd = np.where(ok, vn, vd)
    return _finish(frame, pri, xe, ve, neg_variance=neg, refactorizations=ref, feedback=(xd, vd))


def run_dfe_ic_ep(frame, La=None, window=None, self_iters=0, beta=0.0, banded=True, counter=None):
    """DFE-IC with EP feedback, serially scheduled, with optional self-iterations.

    Causal positions use the feedback of the current self-iteration, the
    target and later symbols the previous one (prior moments at ``s = 0``).
    Improper divisions feed back the posterior moments for the current sweep
    and are reverted to the previous message afterwards.
    """
    window = window or WindowConfig.default(frame.L)
    pri = _Priors(La, frame.constellation, frame.K)
    xd, vd = pri.mean.copy(), pri.var.copy()
    neg = 0
    ref = 0
    for s in range(self_iters + 1):
        (xe, ve, _, xf, vf, flag), r = _sweep(frame, window, MODE_EP, xd, vd, pri, beta, banded, counter)
        ref += r
        bad = flag.astype(bool)
        neg += int(bad.sum())
        xd = np.where(bad, xd, xf)
        vd = np.where(bad, vd, vf)
    return _finish(frame, pri, xe, ve, neg_variance=neg, refactorizations=ref, feedback=(xd, vd))


def _run_app_family(frame, La, window, mode, banded, counter):
    window = window or WindowConfig.default(frame.L)
    c = frame.constellation
    pri = _Priors(La, c, frame.K)
    (xe, ve, ve_raw, xf, vf, _), ref = _sweep(frame, window, mode, pri.mean, pri.var, pri,
                                                banded=banded, counter=counter)
    out = _finish(frame, pri, xe, ve, refactorizations=ref, feedback=(xf, vf))
    if mode == MODE_HAPP:
        D_raw = posterior_pmf_block(pri.pmf, xe, ve_raw, c)
        Le_raw = extrinsic_llrs_block(D_raw, pri.La, c)
        out.llrs = np.where(np.sign(Le_raw) != np.sign(out.llrs), 0.0, out.llrs)
    return out


def run_dfe_ic_app(frame, La=None, window=None, banded=True, counter=None):
    """DFE-IC fed back with posterior means and variances."""
    return _run_app_family(frame, La, window, MODE_APP, banded, counter)


def run_dfe_ic_papp(frame, La=None, window=None, banded=True, counter=None):
    """DFE-IC fed back with posterior means, designed for perfect decisions."""
    return _run_app_family(frame, La, window, MODE_PAPP, banded, counter)


def run_dfe_ic_happ(frame, La=None, window=None, banded=True, counter=None):
    """PAPP filter with the decision-error variance added to ``v^e``.

    LLRs whose sign depends on that extra variance are zeroed.
    """
    return _run_app_family(frame, La, window, MODE_HAPP, banded, counter)


def run_dfe_hard(frame, La=None, window=None, banded=True, counter=None):
    """Classical DFE: hard decisions fed back as known symbols."""
    return _run_app_family(frame, La, window, MODE_HARD, banded, counter)


def equalize(receiver, frame, La=None, window=None, self_iters=0, beta=0.0, **kw):
    """Dispatch by receiver name."""
    if receiver == "le-ic":
        return run_le_ic(frame, La, window, **kw)
    if receiver == "si-le-ic":
        return run_si_le_ic(frame, La, window, self_iters, beta, **kw)
    if receiver in ("dfe-ic-ep", "si-dfe-ic-ep"):
        return run_dfe_ic_ep(frame, La, window, self_iters, beta, **kw)
    if receiver == "dfe-ic-app":
        return run_dfe_ic_app(frame, La, window, **kw)
    if receiver == "dfe-ic-papp":
        return run_dfe_ic_papp(frame, La, window, **kw)
    if receiver == "dfe-ic-happ":
        return run_dfe_ic_happ(frame, La, window, **kw)
    if receiver == "dfe-hard":
        return run_dfe_hard(frame, La, window, **kw)
    raise ValueError(f"unknown receiver {receiver!r}")


def fir_estimate(y_k, H_k, ic, k_w, noise_variance, target, engine=None):
    """Single-window unbiased MMSE estimate with interference cancellation.

    Parameters
    ----------
    y_k : ndarray, shape (N,)
    H_k : ndarray, shape (N, W)
    ic : IcVectors
        Means and variances of the ``W`` window symbols.
    k_w, noise_variance : float
    target : int
        Column of ``H_k`` holding the symbol being estimated (``N_p'``).
    engine : CholFactor, optional
        Factor of the window covariance; computed directly when omitted.
    """
    H_k = np.asarray(H_k, dtype=complex)
    xbar = np.asarray(ic.means, dtype=complex)
    vbar = np.asarray(ic.variances, dtype=float)
    if engine is None:
        engine = chol_init(WindowedCovSpec(k_w * noise_variance, H_k, vbar))
    h = H_k[:, target]
    s = chol_solve(engine, h)
    xi = float(np.real(np.vdot(h, s)))
    f = s / xi
    xe = xbar[target] + np.vdot(f, np.asarray(y_k, dtype=complex) - H_k @ xbar)
    ve = max(1.0 / xi - vbar[target], VE_FLOOR)
    return FirOutput(complex(xe), float(ve))
