"""Tests for the windowed MMSE equalizers."""

import itertools

import numpy as np
import pytest

from turboeq.equalizer import (
    RECEIVERS,
    EpSchedule,
    ExpBetaSchedule,
    Frame,
    IcVectors,
    WindowConfig,
    equalize,
    fir_estimate,
    run_dfe_ic_app,
    run_dfe_ic_ep,
    run_dfe_ic_happ,
    run_dfe_ic_papp,
    run_le_ic,
    run_mfb,
    run_si_le_ic,
)
from turboeq.mapping import constellation
from turboeq.numerics import FlopCounter
from turboeq.txchain import ChannelModel, apply_channel, channel_preset

import oracles

CONSTS = ["bpsk", "qpsk", "8psk", "16qam"]


def random_frame(rng, const="qpsk", K=24, L=3, noise=0.3, tv=True, llr_scale=1.5):
    """Random time-varying frame with random priors loosely tied to the truth."""
    c = constellation(const)
    idx = rng.integers(0, c.M, K)
    x = c.points[idx]
    if tv:
        taps = (rng.standard_normal((K + L - 1, L)) + 1j * rng.standard_normal((K + L - 1, L))) / np.sqrt(2 * L)
        if c.one_real_dof:
            taps = taps.real.astype(complex)
    else:
        h = rng.standard_normal(L) + (0 if c.one_real_dof else 1j * rng.standard_normal(L))
        taps = ChannelModel.static(h / np.linalg.norm(h), K, noise).taps
    y = apply_channel(x, ChannelModel(taps, noise, True), rng)
    if c.one_real_dof:
        y = y.real + 0j
    bits = c.labels[idx]
    La = llr_scale * ((1 - 2 * bits) + rng.standard_normal(bits.shape))
    return Frame(y, taps, noise, c), La, x


def reference(frame, La, name, win, self_iters=0, beta=0.0):
    c = frame.constellation
    return oracles.reference_receiver(name, frame.y, frame.taps, frame.noise_variance, c.points, c.labels,
                                      c.k_w, La, win.N_p, win.N_d, self_iters, beta)


def assert_matches(out, ref, tol=1e-9):
    xe, ve, llr = ref
    np.testing.assert_allclose(out.xe, xe, rtol=tol, atol=tol)
    np.testing.assert_allclose(out.ve, ve, rtol=tol, atol=tol)
    np.testing.assert_allclose(out.llrs, llr, rtol=1e-7, atol=1e-7)


# --------------------------------------------------------------------------- #
# configuration types                                                         #
# --------------------------------------------------------------------------- #


class TestConfigTypes:
    def test_default_window(self):
        w = WindowConfig.default(5)
        assert (w.N, w.N_d, w.N_pp(5)) == (17, 10, 10)

    def test_negative_window(self):
        with pytest.raises(ValueError):
            WindowConfig(-1, 2)

    def test_schedule_lists_repeat(self):
        s = EpSchedule(5, [0, 2, 4], [0.1, 0.5])
        assert [s.self_iters_at(t) for t in range(5)] == [0, 2, 4, 4, 4]
        assert s.beta_at(4) == 0.5

    def test_schedule_bad_beta(self):
        with pytest.raises(ValueError):
            EpSchedule(1, 0, 1.2).beta_at(0)

    def test_exp_beta(self):
        b = ExpBetaSchedule(0.7, 2.0)
        assert b(0) == pytest.approx(0.7) and b(10) == 0.0
        assert b(3) == pytest.approx(1 - np.exp(1.5) / 10)


# --------------------------------------------------------------------------- #
# single-window estimator                                                     #
# --------------------------------------------------------------------------- #


class TestFirEstimate:
    def test_scalar_by_hand(self):
        out = fir_estimate([0.8 - 0.1j], [[1.0]], IcVectors(np.zeros(1), np.ones(1)), 1.0, 1.0, 0)
        assert out.mean == pytest.approx(0.8 - 0.1j) and out.variance == pytest.approx(1.0)

    def test_perfect_ic_matched_filter_bound(self):
        rng = np.random.default_rng(0)
        H = rng.standard_normal((6, 8)) + 1j * rng.standard_normal((6, 8))
        v = np.zeros(8)
        v[4] = 1.0
        out = fir_estimate(rng.standard_normal(6), H, IcVectors(np.zeros(8), v), 0.5, 0.3, 4)
        snr = 1.0 / out.variance
        assert snr == pytest.approx(np.linalg.norm(H[:, 4]) ** 2 / (0.5 * 0.3), rel=1e-12)

    def test_random_against_dense_inverse(self):
        rng = np.random.default_rng(1)
        H = rng.standard_normal((8, 10)) + 1j * rng.standard_normal((8, 10))
        xb = rng.standard_normal(10) + 1j * rng.standard_normal(10)
        vb = rng.uniform(0, 1, 10)
        y = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        out = fir_estimate(y, H, IcVectors(xb, vb), 1.0, 0.4, 5)
        S = 0.4 * np.eye(8) + (H * vb) @ H.conj().T
        h = H[:, 5]
        xi = np.real(h.conj() @ np.linalg.inv(S) @ h)
        f = np.linalg.inv(S) @ h / xi
        assert out.mean == pytest.approx(xb[5] + f.conj() @ (y - H @ xb), abs=1e-10)
        assert out.variance == pytest.approx(1 / xi - vb[5], abs=1e-10)


# --------------------------------------------------------------------------- #
# LE-IC                                                                       #
# --------------------------------------------------------------------------- #


class TestLeIc:
    def test_awgn_no_priors(self):
        rng = np.random.default_rng(2)
        c = constellation("qpsk")
        ch = ChannelModel.static([1.0], 50, 0.2)
        y = apply_channel(c.points[rng.integers(0, 4, 50)], ch, rng)
        out = run_le_ic(Frame(y, ch.taps, 0.2, c))
        np.testing.assert_allclose(out.xe, y, atol=1e-12)
        np.testing.assert_allclose(out.ve, 0.2, rtol=1e-12)

    def test_perfect_priors_matched_filter_bound(self):
        rng = np.random.default_rng(3)
        c = constellation("bpsk")
        h = channel_preset("proakis-c")
        ch = ChannelModel.static(h, 60, 0.1)
        idx = rng.integers(0, 2, 60)
        y = apply_channel(c.points[idx], ch, rng).real + 0j
        La = (1 - 2 * c.labels[idx]) * 1e3
        out = run_le_ic(Frame(y, ch.taps, 0.1, c), La)
        # clipped priors leave variances of order exp(-30)
        np.testing.assert_allclose(out.ve[10:-10], 0.5 * 0.1 / np.sum(np.abs(h) ** 2), rtol=1e-9)

    def test_proakis_against_direct_inversion(self):
        rng = np.random.default_rng(4)
        c = constellation("bpsk")
        ch = ChannelModel.static(channel_preset("proakis-c"), 64, 0.2)
        idx = rng.integers(0, 2, 64)
        y = apply_channel(c.points[idx], ch, rng).real + 0j
        La = 2 * rng.standard_normal((64, 1))
        frame = Frame(y, ch.taps, 0.2, c)
        assert_matches(run_le_ic(frame, La), reference(frame, La, "le-ic", WindowConfig.default(5)))

    def test_prior_free_mmse(self):
        # uniform priors give the plain MMSE linear equalizer
        rng = np.random.default_rng(5)
        frame, _, _ = random_frame(rng, "8psk", K=30)
        win = WindowConfig(2, 4)
        out = run_le_ic(frame, None, win)
        W = win.N_pp(frame.L) + win.N_d + 1
        for k in (0, 7, 29):
            xb = np.zeros(W, complex)
            vb = np.array([1.0 if 0 <= x < frame.K else 0.0 for x in range(k - win.N_pp(frame.L), k + win.N_d + 1)])
            xe, ve, _, _ = oracles.direct_fir(frame.y, frame.taps, frame.K, k, 2, 4, xb, vb, frame.noise_variance)
            assert out.xe[k] == pytest.approx(xe, abs=1e-10) and out.ve[k] == pytest.approx(ve, abs=1e-10)

    def test_banded_equals_dense(self):
        frame, La, _ = random_frame(np.random.default_rng(6), "16qam", K=40, L=4)
        a, b = run_le_ic(frame, La, banded=True), run_le_ic(frame, La, banded=False)
        np.testing.assert_allclose(a.xe, b.xe, atol=1e-11)
        np.testing.assert_allclose(a.ve, b.ve, atol=1e-11)

    def test_counter_and_no_refactorization(self):
        frame, La, _ = random_frame(np.random.default_rng(7), K=40)
        cnt = FlopCounter()
        out = run_le_ic(frame, La, counter=cnt)
        assert cnt.flops > 0 and out.refactorizations == 0


# --------------------------------------------------------------------------- #
# DFE-IC EP and SI LE-IC                                                      #
# --------------------------------------------------------------------------- #


class TestDfeEp:
    def test_first_symbol_equals_le(self):
        frame, _, _ = random_frame(np.random.default_rng(8), K=30)
        ep, le = run_dfe_ic_ep(frame), run_le_ic(frame)
        assert ep.xe[0] == le.xe[0] and ep.ve[0] == le.ve[0]

    @pytest.mark.parametrize("const", CONSTS)
    def test_toy_trajectory(self, const):
        # 3-tap channel, K=6
        rng = np.random.default_rng(9)
        frame, La, _ = random_frame(rng, const, K=6, L=3, noise=0.5)
        win = WindowConfig(2, 3)
        for S, beta in [(0, 0.0), (2, 0.0), (3, 0.4)]:
            out = run_dfe_ic_ep(frame, La, win, S, beta)
            assert_matches(out, reference(frame, La, "si-dfe-ic-ep", win, S, beta))

    def test_improper_division_path(self):
        # confident wrong priors drive posterior variances above v^e
        rng = np.random.default_rng(10)
        hits = 0
        for trial in range(20):
            frame, La, _ = random_frame(rng, "qpsk", K=30, L=3, noise=0.05, llr_scale=-2.0)
            win = WindowConfig(2, 4)
            out = run_dfe_ic_ep(frame, La, win, 2, 0.3)
            hits += out.neg_variance
            assert_matches(out, reference(frame, La, "si-dfe-ic-ep", win, 2, 0.3))
        assert hits > 0


class TestSiLeIc:
    def test_zero_self_iters_is_le(self):
        frame, La, _ = random_frame(np.random.default_rng(11), "8psk", K=30)
        a, b = run_si_le_ic(frame, La, None, 0), run_le_ic(frame, La)
        assert np.array_equal(a.xe, b.xe) and np.array_equal(a.ve, b.ve) and np.array_equal(a.llrs, b.llrs)

    def test_full_damping_is_le(self):
        frame, La, _ = random_frame(np.random.default_rng(12), "qpsk", K=30)
        a, b = run_si_le_ic(frame, La, None, 1, 1.0), run_le_ic(frame, La)
        np.testing.assert_allclose(a.xe, b.xe, atol=1e-13)
        np.testing.assert_allclose(a.ve, b.ve, atol=1e-13)

    def test_two_self_iters_oracle(self):
        rng = np.random.default_rng(13)
        frame, La, _ = random_frame(rng, "16qam", K=20, L=3, noise=0.1)
        win = WindowConfig(2, 4)
        assert_matches(run_si_le_ic(frame, La, win, 2, 0.2), reference(frame, La, "si-le-ic", win, 2, 0.2))


# --------------------------------------------------------------------------- #
# posterior-feedback family                                                   #
# --------------------------------------------------------------------------- #


class TestAppFamily:
    @pytest.mark.parametrize("name", ["dfe-ic-app", "dfe-ic-papp", "dfe-ic-happ", "dfe-hard"])
    def test_oracle(self, name):
        rng = np.random.default_rng(14)
        for const in CONSTS:
            frame, La, _ = random_frame(rng, const, K=25, L=4)
            win = WindowConfig(3, 5)
            assert_matches(equalize(name, frame, La, win), reference(frame, La, name, win))

    @pytest.mark.parametrize("name", ["dfe-ic-ep", "dfe-ic-app", "dfe-ic-happ"])
    def test_no_causal_window(self, name):
        # L=1, N_p=0 leaves no causal column to swap
        frame, La, _ = random_frame(np.random.default_rng(22), "8psk", K=20, L=1)
        win = WindowConfig(0, 2)
        assert_matches(equalize(name, frame, La, win), reference(frame, La, name, win))

    def test_point_mass_posteriors_coincide(self):
        rng = np.random.default_rng(15)
        frame, _, x = random_frame(rng, "qpsk", K=30, noise=1e-4)
        c = frame.constellation
        idx = [int(np.argmin(np.abs(c.points - s))) for s in x]
        La = (1 - 2 * c.labels[idx]) * 100.0
        outs = [run_dfe_ic_app(frame, La), run_dfe_ic_papp(frame, La), run_dfe_ic_happ(frame, La)]
        for o in outs[1:]:
            np.testing.assert_allclose(o.xe, outs[0].xe, atol=1e-9)
            np.testing.assert_allclose(o.ve, outs[0].ve, rtol=1e-6, atol=1e-12)

    def test_papp_ignores_causal_variance(self):
        # PAPP equals a direct estimate with zero causal variances
        frame, La, _ = random_frame(np.random.default_rng(16), "8psk", K=20)
        win = WindowConfig(2, 3)
        out = run_dfe_ic_papp(frame, La, win)
        xf, _ = out.feedback
        c = frame.constellation
        pri = [oracles.moments(oracles.prior_pmf(La[k], c.points, c.labels), c.points) for k in range(frame.K)]
        k = 11
        Npp = win.N_pp(frame.L)
        cols = range(k - Npp, k + win.N_d + 1)
        xb = np.array([xf[x] if x < k else pri[x][0] for x in cols])
        vb = np.array([0.0 if x < k else pri[x][1] for x in cols])
        xe, ve, _, _ = oracles.direct_fir(frame.y, frame.taps, frame.K, k, 2, 3, xb, vb, c.k_w * frame.noise_variance)
        assert out.xe[k] == pytest.approx(xe, abs=1e-10) and out.ve[k] == pytest.approx(ve, abs=1e-10)

    def test_happ_inflation_exhaustive(self):
        # L=2, N_p=1: a two-symbol causal window
        rng = np.random.default_rng(17)
        frame, La, _ = random_frame(rng, "qpsk", K=12, L=2, noise=0.4)
        win = WindowConfig(1, 3)
        papp = run_dfe_ic_papp(frame, La, win)
        happ = run_dfe_ic_happ(frame, La, win)
        c = frame.constellation
        k = 6
        xf = papp.feedback[0]
        pri = [oracles.moments(oracles.prior_pmf(La[j], c.points, c.labels), c.points) for j in range(frame.K)]
        cols = list(range(k - 2, k + 4))
        xb = np.array([xf[x] if x < k else pri[x][0] for x in cols])
        vb = np.array([0.0 if x < k else pri[x][1] for x in cols])
        _, _, f, Hk = oracles.direct_fir(frame.y, frame.taps, frame.K, k, 1, 3, xb, vb, c.k_w * frame.noise_variance)
        g = Hk.conj().T @ f
        D1, D2 = papp.posterior[k - 2], papp.posterior[k - 1]
        mu = np.array([xf[k - 2], xf[k - 1]])
        vals, probs = [], []
        for a, b in itertools.product(range(c.M), repeat=2):
            e = np.array([c.points[a], c.points[b]]) - mu
            vals.append(np.vdot(g[:2], e))
            probs.append(D1[a] * D2[b])
        vals, probs = np.array(vals), np.array(probs)
        m = np.sum(probs * vals)
        var = float(np.sum(probs * np.abs(vals - m) ** 2))
        assert happ.ve[k] - papp.ve[k] == pytest.approx(var, rel=1e-9, abs=1e-13)

    def test_happ_zeroes_only_flipped_llrs(self):
        frame, La, _ = random_frame(np.random.default_rng(18), "16qam", K=40, noise=0.3)
        happ, papp = run_dfe_ic_happ(frame, La), run_dfe_ic_papp(frame, La)
        zero = happ.llrs == 0
        assert np.all(np.sign(happ.llrs[~zero]) == np.sign(papp.llrs[~zero]))


# --------------------------------------------------------------------------- #
# statistical properties                                                      #
# --------------------------------------------------------------------------- #


@pytest.fixture(scope="module")
def proakis_run():
    rng = np.random.default_rng(19)
    c = constellation("bpsk")
    ch = ChannelModel.static(channel_preset("proakis-c"), 2048, 0.1)
    xs, xes, ves = [], [], []
    for _ in range(50):
        idx = rng.integers(0, 2, 2048)
        x = c.points[idx].real
        y = apply_channel(x, ch, rng).real + 0j
        out = run_le_ic(Frame(y, ch.taps, 0.1, c))
        xs.append(x)
        xes.append(out.xe.real)
        ves.append(out.ve)
    return np.concatenate(xs), np.concatenate(xes), np.concatenate(ves)


class TestStatistics:
    def test_unbiased(self, proakis_run):
        x, xe, _ = proakis_run
        for alpha in (1.0, -1.0):
            sel = xe[x == alpha]
            se = sel.std() / np.sqrt(sel.size)
            assert abs(sel.mean() - alpha) < 3 * se

    def test_variance_calibrated(self, proakis_run):
        # with k_w = 1/2, v^e is the variance of the real part
        x, xe, ve = proakis_run
        assert np.mean((xe - x) ** 2) == pytest.approx(np.mean(ve), rel=0.05)


class TestMfb:
    def test_genie_known_interference(self):
        rng = np.random.default_rng(20)
        frame, _, x = random_frame(rng, "qpsk", K=40, tv=False)
        out = run_mfb(frame, x)
        h2 = np.sum(np.abs(frame.taps[20]) ** 2)
        assert out.ve[20] == pytest.approx(frame.noise_variance / h2, rel=1e-9)


def test_receiver_names_dispatch():
    frame, La, _ = random_frame(np.random.default_rng(21), K=10)
    for name in RECEIVERS + ("dfe-hard",):
        assert equalize(name, frame, La).llrs.shape == (10, 2)
    with pytest.raises(ValueError):
        equalize("zf", frame, La)
