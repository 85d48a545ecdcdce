"""
Soft mapping and demapping with Gaussian (EP) message arithmetic.

LLR sign convention: ``L(d) = ln P[d=0] / P[d=1]``.  Symbol PMFs are plain
length-``M`` float arrays, Gaussian messages are :class:`GaussianMsg` pairs.
Vectorized ``*_block`` variants operate on whole frames at once and are what
the receivers use; the scalar functions are thin wrappers around them.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

#: Magnitude at which LLRs are clipped.
LLR_CLIP = 30.0
#: Smallest unnormalized PMF weight kept.
PMF_FLOOR = 1e-300


class DegeneratePmf(FloatingPointError):
    """Every posterior weight underflowed."""


@dataclass(frozen=True)
class GaussianMsg:
    """Scalar complex Gaussian message; ``variance = inf`` means no information."""

    mean: complex
    variance: float


#: Marker returned by :func:`gaussian_divide` when the quotient is improper.
NEG_VARIANCE = None


@dataclass(frozen=True, eq=False)
class Constellation:
    """Unit-power constellation with a bit labeling.

    Attributes
    ----------
    name : str
    points : ndarray of complex, shape (M,)
    labels : ndarray of int8, shape (M, q)
        ``labels[m, j]`` is bit ``j`` (MSB first) of point ``m``.
    one_real_dof : bool
        True for real-valued alphabets (BPSK).
    """

    name: str
    points: np.ndarray
    labels: np.ndarray
    one_real_dof: bool = False

    @property
    def M(self):
        return self.points.shape[0]

    @property
    def q(self):
        return self.labels.shape[1]

    @property
    def k_w(self):
        """Noise weighting: 1/2 for real alphabets, 1 otherwise."""
        return 0.5 if self.one_real_dof else 1.0

    @property
    def signs(self):
        """``1 - 2 * labels`` as floats, i.e. +1 for bit 0."""
        return 1.0 - 2.0 * self.labels

    def map_bits(self, bits):
        """Map a bit vector (length multiple of ``q``) to symbols."""
        bits = np.asarray(bits, dtype=np.int64).reshape(-1, self.q)
        weights = 1 << np.arange(self.q - 1, -1, -1)
        return self.points[self._index_of_label[bits @ weights]]

    def symbol_bits(self, indices):
        return self.labels[np.asarray(indices)].reshape(-1)

    @property
    def _index_of_label(self):
        weights = 1 << np.arange(self.q - 1, -1, -1)
        inv = np.empty(self.M, dtype=np.int64)
        inv[self.labels.astype(np.int64) @ weights] = np.arange(self.M)
        return inv


def _bits_of(value, q):
    return [(value >> (q - 1 - j)) & 1 for j in range(q)]


@lru_cache(maxsize=None)
def constellation(name):
    """Build a named constellation: ``bpsk``, ``qpsk``, ``8psk`` or ``16qam``.

    Labelings are Gray: BPSK 0 -> +1; QPSK bits drive the I and Q signs;
    8-PSK point ``m`` (counterclockwise from angle 0) carries ``m ^ (m >> 1)``;
    16-QAM is per-axis Gray PAM-4 (00, 01, 11, 10 -> +3, +1, -1, -3).
    """
    key = name.lower()
    if key == "bpsk":
        pts = np.array([1.0, -1.0], dtype=complex)
        lab = [[0], [1]]
        return Constellation("bpsk", pts, np.array(lab, dtype=np.int8), True)
    if key == "qpsk":
        lab = [_bits_of(m, 2) for m in range(4)]
        pts = np.array([(1 - 2 * b0) + 1j * (1 - 2 * b1) for b0, b1 in lab]) / np.sqrt(2)
        return Constellation("qpsk", pts, np.array(lab, dtype=np.int8))
    if key == "8psk":
        pts = np.exp(2j * np.pi * np.arange(8) / 8)
        lab = [_bits_of(m ^ (m >> 1), 3) for m in range(8)]
        return Constellation("8psk", pts, np.array(lab, dtype=np.int8))
    if key == "16qam":
        pam = {(0, 0): 3.0, (0, 1): 1.0, (1, 1): -1.0, (1, 0): -3.0}
        lab = [_bits_of(m, 4) for m in range(16)]
        pts = np.array([pam[(b[0], b[1])] + 1j * pam[(b[2], b[3])] for b in lab]) / np.sqrt(10)
        return Constellation("16qam", pts, np.array(lab, dtype=np.int8))
    raise ValueError(f"unknown constellation {name!r}")


# ---------------------------------------------------------------------------
# block (vectorized) primitives
# ---------------------------------------------------------------------------


def _normalize_log(logw):
    logw = logw - logw.max(axis=-1, keepdims=True)
    w = np.maximum(np.exp(logw), PMF_FLOOR)
    return w / w.sum(axis=-1, keepdims=True)


def prior_log_block(La, c):
    """Unnormalized log prior weights, shape (K, M), from LLRs shape (K, q)."""
    La = np.clip(np.asarray(La, dtype=float).reshape(-1, c.q), -LLR_CLIP, LLR_CLIP)
    return -La @ c.labels.T.astype(float)


def prior_pmf_block(La, c):
    return _normalize_log(prior_log_block(La, c))


def posterior_pmf_block(prior, xe, ve, c):
    """Posterior PMFs, shape (K, M), given prior PMFs and extrinsic messages."""
    prior = np.asarray(prior, dtype=float)
    xe = np.asarray(xe, dtype=complex).reshape(-1, 1)
    ve = np.asarray(ve, dtype=float).reshape(-1, 1)
    inf = np.isinf(ve[:, 0])
    with np.errstate(divide="ignore"):
        logw = np.log(np.maximum(prior, PMF_FLOOR))
    dist = np.abs(c.points[None, :] - xe) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        metric = np.where(inf[:, None], 0.0, -c.k_w * dist / np.where(inf[:, None], 1.0, ve))
    logw = logw + metric
    logw = logw - logw.max(axis=-1, keepdims=True)
    w = np.exp(logw)
    w = np.where(w < PMF_FLOOR, 0.0, w)
    tot = w.sum(axis=-1, keepdims=True)
    if np.any(~(tot > 0)):
        raise DegeneratePmf("posterior weights underflowed")
    out = w / tot
    if np.any(inf):
        out[inf] = prior[inf]
    return out


def moments_block(p, c):
    """Mean and variance of each row PMF."""
    p = np.asarray(p, dtype=float)
    mu = p @ c.points
    var = np.einsum("km,km->k", p, np.abs(c.points[None, :] - mu[:, None]) ** 2)
    return mu, var


def divide_block(mu, gamma, xe, ve):
    """Vectorized Gaussian division; returns ``(x*, v*, ok)``.

    ``ok`` is False where ``gamma >= ve`` (improper quotient); there ``x*`` and
    ``v*`` are NaN.  ``ve = inf`` returns the posterior unchanged.
    """
    mu = np.asarray(mu, dtype=complex)
    gamma = np.asarray(gamma, dtype=float)
    xe = np.asarray(xe, dtype=complex)
    ve = np.asarray(ve, dtype=float)
    ok = gamma < ve
    inf = np.isinf(ve)
    with np.errstate(invalid="ignore", divide="ignore"):
        den = np.where(ok & ~inf, ve - gamma, 1.0)
        xs = np.where(inf, mu, (mu * ve - xe * gamma) / den)
        vs = np.where(inf, gamma, ve * gamma / den)
    xs = np.where(ok, xs, np.nan)
    vs = np.where(ok, vs, np.nan)
    return xs, vs, ok


def damp_block(x_new, v_new, x_prev, v_prev, beta):
    """Precision-domain damping: ``1/v = (1-beta)/v_new + beta/v_prev``.

    A zero previous variance (perfectly known symbol) returns the previous
    message; ``beta = 0`` returns the new one exactly.
    """
    x_new = np.asarray(x_new, dtype=complex)
    v_new = np.asarray(v_new, dtype=float)
    x_prev = np.asarray(x_prev, dtype=complex)
    v_prev = np.asarray(v_prev, dtype=float)
    if beta == 0.0:
        return x_new.copy(), v_new.copy()
    if beta == 1.0:
        return x_prev.copy(), v_prev.copy()
    known = v_prev <= 0.0
    new_known = (v_new <= 0.0) & ~known
    with np.errstate(divide="ignore", invalid="ignore"):
        lam_new = (1.0 - beta) / v_new
        lam_prev = beta / v_prev
        lam = lam_new + lam_prev
        v = 1.0 / lam
        x = v * (lam_new * x_new + lam_prev * x_prev)
    x = np.where(known, x_prev, np.where(new_known, x_new, x))
    v = np.where(known, v_prev, np.where(new_known, 0.0, v))
    return x, v


def extrinsic_llrs_block(post, La, c):
    """Extrinsic bit LLRs, shape (K, q), from posterior PMFs."""
    post = np.maximum(np.asarray(post, dtype=float), PMF_FLOOR)
    La = np.clip(np.asarray(La, dtype=float).reshape(-1, c.q), -LLR_CLIP, LLR_CLIP)
    zero = post @ (1 - c.labels).astype(float)
    one = post @ c.labels.astype(float)
    Le = np.log(zero) - np.log(one) - La
    return np.clip(Le, -LLR_CLIP, LLR_CLIP)


def hard_decide_block(p):
    return np.argmax(np.asarray(p), axis=-1)


# ---------------------------------------------------------------------------
# scalar API
# ---------------------------------------------------------------------------


def prior_pmf(La, c):
    """Prior PMF of one symbol from its ``q`` bit LLRs."""
    return prior_pmf_block(np.reshape(La, (1, c.q)), c)[0]


def posterior_pmf(prior, ext, c):
    """Posterior PMF combining a prior PMF with an extrinsic Gaussian message."""
    return posterior_pmf_block(np.reshape(prior, (1, -1)), [ext.mean], [ext.variance], c)[0]


def pmf_moments(p, c):
    mu, var = moments_block(np.reshape(p, (1, -1)), c)
    return GaussianMsg(complex(mu[0]), float(var[0]))


def gaussian_divide(post, ext):
    """Divide the posterior ``(mu, gamma)`` by the extrinsic ``(x_e, v_e)``.

    Returns ``NEG_VARIANCE`` (None) when ``gamma >= v_e``.
    """
    xs, vs, ok = divide_block([post.mean], [post.variance], [ext.mean], [ext.variance])
    if not ok[0]:
        return NEG_VARIANCE
    return GaussianMsg(complex(xs[0]), float(vs[0]))


def damp(new, prev, beta):
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    x, v = damp_block([new.mean], [new.variance], [prev.mean], [prev.variance], beta)
    return GaussianMsg(complex(x[0]), float(v[0]))


def extrinsic_llrs(post, La, c):
    return extrinsic_llrs_block(np.reshape(post, (1, -1)), np.reshape(La, (1, c.q)), c)[0]


def hard_decide(p, c):
    """Most probable symbol; ties go to the lowest index."""
    return c.points[int(np.argmax(p))]
