"""
Dense complex linear algebra for sliding-window MMSE filters.

The covariance of a length-``N`` observation window,

    Sigma_k = k_w sigma_w^2 I + H_k diag(v_k) H_k^H,

changes by one row/column (window slide) and by one rank-1 term (a
decision-feedback variance swap) from one symbol to the next.  Instead of
refactorizing, the lower Cholesky factor is carried along:

* :func:`chol_init` factors the first window directly.
* :func:`chol_slide_le` appends the new observation row, drops the oldest one
  and repairs the factor with a Givens sweep.
* :func:`chol_rank1_dfe` applies the rank-1 update or hyperbolic downdate that
  moves one symbol from its anti-causal to its causal variance.
* :func:`chol_solve` runs the forward/backward substitutions.

The heavy lifting is done by the ``_``-prefixed numba kernels, which are also
called from the equalizer's per-symbol loop.  Every kernel takes a bandwidth
argument ``bw`` (entries further than ``bw`` below the diagonal are known to
be zero and are skipped) and an ``ops`` counter, a length-1 int64 array that
accumulates the number of real additions and multiplications performed.
"""

from dataclasses import dataclass
from enum import Enum
from math import sqrt

import numpy as np
from numba import njit

#: Relative pivot threshold below which a downdate is declared not PD.
DOWNDATE_EPS = 1e-12

# kernel status codes
_OK = 0
_DOWNDATE_FAIL = 1
_NOT_PD = 2


class NotPositiveDefinite(np.linalg.LinAlgError):
    """A Cholesky pivot became nonpositive."""


class DowndateNotPD(NotPositiveDefinite):
    """A rank-1 downdate would leave an indefinite matrix."""


class DimensionMismatch(ValueError):
    pass


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _chol_banded(S, out, bw, ops):
    """Lower Cholesky factor of Hermitian ``S`` into ``out``; status code."""
    n = S.shape[0]
    cnt = 0
    for i in range(n):
        for j in range(n):
            out[i, j] = 0.0
    for j in range(n):
        lo = max(0, j - bw)
        d = S[j, j].real
        for p in range(lo, j):
            z = out[j, p]
            d -= z.real * z.real + z.imag * z.imag
        cnt += 4 * (j - lo) + 1
        if not d > 0.0:
            ops[0] += cnt
            return _NOT_PD
        piv = sqrt(d)
        out[j, j] = piv
        for i in range(j + 1, min(n, j + bw + 1)):
            acc = S[i, j]
            for p in range(max(lo, i - bw), j):
                acc -= out[i, p] * np.conj(out[j, p])
                cnt += 8
            out[i, j] = acc / piv
            cnt += 2
    ops[0] += cnt
    return _OK


@njit(cache=True)
def _forward_solve(L, b, out, start, bw, ops):
    """Solve ``L out = b`` for lower-triangular ``L``; ``b[:start]`` must be 0."""
    n = L.shape[0]
    cnt = 0
    for i in range(start):
        out[i] = 0.0
    for i in range(start, n):
        acc = b[i]
        for j in range(max(start, i - bw), i):
            acc -= L[i, j] * out[j]
            cnt += 8
        out[i] = acc / L[i, i].real
        cnt += 2
    ops[0] += cnt


@njit(cache=True)
def _backward_solve(L, b, out, bw, ops):
    """Solve ``L^H out = b`` for lower-triangular ``L``."""
    n = L.shape[0]
    cnt = 0
    for i in range(n - 1, -1, -1):
        acc = b[i]
        for j in range(i + 1, min(n, i + bw + 1)):
            acc -= np.conj(L[j, i]) * out[j]
            cnt += 8
        out[i] = acc / L[i, i].real
        cnt += 2
    ops[0] += cnt


@njit(cache=True)
def _rank1(L, w, sign, bw, ops):
    """In-place ``L L^H + sign * w w^H`` with Givens/hyperbolic rotations.

    ``w`` is destroyed.  Rows of column ``l`` beyond ``l + bw`` are touched
    only while ``w`` still has fill there.
    """
    n = L.shape[0]
    first = n
    last = -1
    for i in range(n):
        if w[i] != 0:
            if first == n:
                first = i
            last = i
    if last < 0:
        return _OK
    cnt = 0
    hi = last + 1
    for l in range(first, n):
        wl = w[l]
        if wl == 0:
            continue
        hi = min(n, max(hi, l + bw + 1))
        piv = L[l, l].real
        w2 = wl.real * wl.real + wl.imag * wl.imag
        p2 = piv * piv
        cnt += 6
        if sign > 0:
            r = sqrt(p2 + w2)
        else:
            if p2 - w2 < DOWNDATE_EPS * p2:
                ops[0] += cnt
                return _DOWNDATE_FAIL
            r = sqrt(p2 - w2)
        c = piv / r
        s = wl / r
        cnt += 3
        L[l, l] = r
        w[l] = 0.0
        sc = np.conj(s)
        for i in range(l + 1, hi):
            a = L[i, l]
            b = w[i]
            if sign > 0:
                L[i, l] = c * a + sc * b
            else:
                L[i, l] = c * a - sc * b
            w[i] = c * b - s * a
        cnt += 20 * (hi - l - 1)
    ops[0] += cnt
    return _OK


@njit(cache=True)
def _append_drop(L, c, d, out, bw, ops):
    """Slide the window by one observation.

    ``L`` factors the previous ``n x n`` window covariance, ``c`` is the
    cross-covariance of its rows with the incoming observation and ``d`` the
    incoming diagonal entry (noise included).  The factor of the window
    without its first row and with the new one appended goes into ``out``.
    """
    n = L.shape[0]
    start = n
    for i in range(n):
        if c[i] != 0:
            start = i
            break
    l12 = np.zeros(n, dtype=np.complex128)
    if start < n:
        _forward_solve(L, c, l12, start, bw, ops)
    t = d
    for i in range(start, n):
        z = l12[i]
        t -= z.real * z.real + z.imag * z.imag
    ops[0] += 4 * (n - start) + 1
    if not t > 0.0:
        return _NOT_PD
    for i in range(n):
        for j in range(n):
            out[i, j] = 0.0
    for i in range(1, n):
        for j in range(max(1, i - bw), i + 1):
            out[i - 1, j - 1] = L[i, j]
    for j in range(1, n):
        out[n - 1, j - 1] = np.conj(l12[j])
    out[n - 1, n - 1] = sqrt(t)
    w = np.zeros(n, dtype=np.complex128)
    for i in range(1, n):
        w[i - 1] = L[i, 0]
    w[n - 1] = np.conj(l12[0])
    return _rank1(out, w, 1, bw, ops)


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


class FlopCounter:
    """Accumulates real additions and multiplications from the kernels.

    One real add or multiply counts as half a FLOP.
    """

    def __init__(self):
        self.ops = np.zeros(1, dtype=np.int64)

    @property
    def real_ops(self):
        return int(self.ops[0])

    @property
    def flops(self):
        return 0.5 * self.ops[0]

    def reset(self):
        self.ops[0] = 0


def _ops_array(counter):
    return counter.ops if counter is not None else np.zeros(1, dtype=np.int64)


def _raise_status(status):
    if status == _DOWNDATE_FAIL:
        raise DowndateNotPD("rank-1 downdate drove a pivot nonpositive")
    if status == _NOT_PD:
        raise NotPositiveDefinite("covariance is not positive definite")


@dataclass
class CholFactor:
    """Lower-triangular factor ``L`` with ``L @ L^H`` equal to a covariance."""

    L: np.ndarray

    @property
    def dim(self):
        return self.L.shape[0]

    def covariance(self):
        return self.L @ self.L.conj().T


@dataclass
class WindowedCovSpec:
    """Implied covariance ``noise_variance * I + H diag(v) H^H``.

    ``noise_variance`` is already scaled by ``k_w``.
    """

    noise_variance: float
    channel_window: np.ndarray
    prior_variances: np.ndarray

    def covariance(self):
        H = np.asarray(self.channel_window, dtype=complex)
        v = np.asarray(self.prior_variances, dtype=float)
        return self.noise_variance * np.eye(H.shape[0]) + (H * v) @ H.conj().T


def chol_init(spec, counter=None):
    """Factor the covariance described by a :class:`WindowedCovSpec`."""
    S = np.ascontiguousarray(spec.covariance(), dtype=np.complex128)
    out = np.empty_like(S)
    _raise_status(_chol_banded(S, out, S.shape[0], _ops_array(counter)))
    return CholFactor(out)


def chol_slide_le(prev, noise_variance, H_prev, H_next, v_prev, v_new, counter=None):
    """Slide a window factor by one symbol.

    Parameters
    ----------
    prev : CholFactor
        Factor of ``Sigma_{k-1}``.
    noise_variance : float
        ``k_w * sigma_w^2``.
    H_prev, H_next : ndarray, shape (N, N + L - 1)
        Channel windows ``H_{k-1}`` and ``H_k``.
    v_prev : ndarray
        Variances baked into ``prev``, symbols ``k-1-N_p' .. k-1+N_d``.
    v_new : float
        Variance of the incoming symbol ``k+N_d``.

    Returns
    -------
    CholFactor
        Factor of ``Sigma_k`` whose variances are ``v_prev[1:]`` followed by
        ``v_new``.
    """
    H_prev = np.asarray(H_prev, dtype=complex)
    H_next = np.asarray(H_next, dtype=complex)
    v_prev = np.asarray(v_prev, dtype=float)
    n = prev.dim
    if H_prev.shape != H_next.shape or H_prev.shape[0] != n or v_prev.shape[0] != H_prev.shape[1]:
        raise DimensionMismatch("window shapes do not agree with the factor")
    new_row = H_next[-1]
    v_slid = np.append(v_prev[1:], v_new)
    # shared columns: previous window column j+1 is next window column j
    c = H_prev[:, 1:] @ (v_prev[1:] * new_row[:-1].conj())
    d = noise_variance + float(np.sum(np.abs(new_row) ** 2 * v_slid))
    out = np.empty((n, n), dtype=np.complex128)
    status = _append_drop(
        np.ascontiguousarray(prev.L), np.ascontiguousarray(c), d, out, n, _ops_array(counter)
    )
    _raise_status(status)
    return CholFactor(out)


def chol_rank1_dfe(prev, old_var, new_var, channel_column, counter=None):
    """Swap one symbol variance from ``old_var`` to ``new_var``.

    Applies ``(new_var - old_var) * h h^H`` with ``h = channel_column`` as a
    rank-1 update (variance grows) or downdate (variance shrinks).
    """
    col = np.asarray(channel_column, dtype=np.complex128)
    if col.shape[0] != prev.dim:
        raise DimensionMismatch("channel column length differs from factor size")
    delta = float(new_var) - float(old_var)
    L = np.array(prev.L, dtype=np.complex128, copy=True)
    if delta == 0.0:
        return CholFactor(L)
    w = np.sqrt(abs(delta)) * col
    status = _rank1(L, w, 1 if delta > 0 else -1, L.shape[0], _ops_array(counter))
    _raise_status(status)
    return CholFactor(L)


def chol_solve(factor, rhs, counter=None):
    """Return ``Sigma^{-1} rhs`` with ``Sigma = L L^H``."""
    b = np.asarray(rhs, dtype=np.complex128)
    n = factor.dim
    if b.shape != (n,):
        raise DimensionMismatch(f"rhs has shape {b.shape}, expected ({n},)")
    L = np.ascontiguousarray(factor.L, dtype=np.complex128)
    ops = _ops_array(counter)
    u = np.empty(n, dtype=np.complex128)
    x = np.empty(n, dtype=np.complex128)
    _forward_solve(L, b, u, 0, n, ops)
    _backward_solve(L, u, x, n, ops)
    return x


# ---------------------------------------------------------------------------
# operation counts
# ---------------------------------------------------------------------------


class Receiver(str, Enum):
    LE_IC_TUCHLER = "LE-IC-Tuchler"
    LE_IC_CHOL = "LE-IC-Chol"
    DFE_IC_CHOL = "DFE-IC-Chol"
    MAP = "MAP"


def _band_chol_ops(n, bw):
    total = 0
    for j in range(n):
        lo = max(0, j - bw)
        total += 4 * (j - lo) + 1
        for i in range(j + 1, min(n, j + bw + 1)):
            total += 8 * (j - max(lo, i - bw)) + 2
    return total


def _forward_ops(n, start, bw):
    return sum(8 * (i - max(start, i - bw)) + 2 for i in range(start, n))


def _backward_ops(n, bw):
    return sum(8 * (min(n, i + bw + 1) - i - 1) + 2 for i in range(n))


def _sweep_ops(n, first, last, bw):
    """Ops of one :func:`_rank1` sweep whose vector spans ``first..last``."""
    total = 0
    hi = last + 1
    for l in range(first, n):
        hi = min(n, max(hi, l + bw + 1))
        total += 9 + 20 * (hi - l - 1)
    return total


def window_ops(N, L, N_d, M, q, dfe):
    """Per-symbol real ops of the banded sliding-window equalizer pass.

    Covers the window slide, the decision-feedback rank-1 repair when
    ``dfe`` is set, the filter solves, the interference-cancelled estimate
    and the soft demapper.
    """
    bw = L - 1
    N_p = N - N_d - 1
    n_cross = min(L - 1, N)
    ops = 0
    # cross-covariance with the new row, and the new diagonal
    ops += 10 * (L - 1) * L // 2 + 4 * L + 1
    ops += _forward_ops(N, N - n_cross, bw) + 4 * n_cross + 1
    ops += _sweep_ops(N, 0, min(bw, N) - 1, bw) if bw > 0 else 0
    if dfe:
        first = max(0, N_p - 1)
        last = min(N - 1, N_p + L - 2)
        ops += 2 * (last - first + 1) + _sweep_ops(N, first, last, bw)
    # u = L^{-1} h, xi = |u|^2, f = L^{-H} u / xi
    ops += _forward_ops(N, N_p, bw) + 4 * (N - N_p) + _backward_ops(N, bw) + 2 * N + 1
    # residual y - H xbar, then f^H r and the output variance
    ops += 8 * N * L + 2 * N + 8 * N + 6
    # demapper: prior pmf, posterior metric, moments, extrinsic llrs
    ops += M * q + 12 * M + 10 * M + 2 * M * q
    if dfe:
        ops += 20
    return ops


def flop_count(receiver, L, N, M, K, N_d=None):
    """Analytic FLOPs per block of ``K`` symbols.

    Parameters
    ----------
    receiver : Receiver or str
        ``"LE-IC-Tuchler"``, ``"LE-IC-Chol"``, ``"DFE-IC-Chol"`` or ``"MAP"``.
    L : int
        Channel taps.
    N : int
        Window length.
    M : int
        Constellation size.
    K : int
        Symbols per block.
    N_d : int, optional
        Post-cursor length, default ``2 L``.

    Notes
    -----
    Cholesky variants are counted from the banded kernels actually used by the
    equalizer (initial factorization plus ``K - 1`` slides).  The recursive
    inverse baseline uses its published orders: ``4 N^3 / 3`` complex
    multiply-accumulates for the initial Gauss-Jordan inverse and ``2 N^2`` per
    slide, plus the ``N L`` product ``Sigma^{-1} h``; the interference
    cancellation and demapper costs are shared with the Cholesky variants.
    MAP is a BCJR symbol trellis with ``M^(L-1)`` states and ``M`` branches.
    """
    receiver = Receiver(receiver)
    if N_d is None:
        N_d = 2 * L
    q = max(1, int(round(np.log2(M))))
    if receiver is Receiver.MAP:
        branches = M ** L
        # branch metric (complex distance, 12 ops), forward/backward/posterior
        # max-star passes, and per-bit marginals
        per_symbol = branches * (12 + 3 * 3) + M * q * 2
        return 0.5 * K * per_symbol
    bw = L - 1
    N_p = N - N_d - 1
    shared = 8 * N * L + 2 * N + 8 * N + 6 + M * q + 12 * M + 10 * M + 2 * M * q
    if receiver is Receiver.LE_IC_TUCHLER:
        init = 8 * (4 * N ** 3) / 3
        per_slide = 8 * 2 * N ** 2 + 8 * N * L + 8 * L + 2 * N
        total = init + per_slide + max(K - 1, 0) * per_slide + K * shared if K else init
        return 0.5 * total
    dfe = receiver is Receiver.DFE_IC_CHOL
    # direct factorization of the first window, including Sigma itself
    init = _band_chol_ops(N, bw) + N * (bw + 1) * 10 * L
    if K == 0:
        return 0.5 * init
    solve = _forward_ops(N, N_p, bw) + 4 * (N - N_p) + _backward_ops(N, bw) + 2 * N + 1
    first = init + solve + shared + (20 if dfe else 0)
    per = window_ops(N, L, N_d, M, q, dfe)
    return 0.5 * (first + (K - 1) * per)
