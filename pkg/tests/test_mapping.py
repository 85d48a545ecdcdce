"""Tests for constellations, soft demapping and Gaussian message arithmetic."""

import dataclasses
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from turboeq.mapping import (
    LLR_CLIP,
    NEG_VARIANCE,
    DegeneratePmf,
    GaussianMsg,
    constellation,
    damp,
    extrinsic_llrs,
    gaussian_divide,
    hard_decide,
    pmf_moments,
    posterior_pmf,
    prior_pmf,
    prior_pmf_block,
)

NAMES = ["bpsk", "qpsk", "8psk", "16qam"]


# --------------------------------------------------------------------------- #
# constellations                                                              #
# --------------------------------------------------------------------------- #


class TestConstellation:
    @pytest.mark.parametrize("name", NAMES)
    def test_zero_mean_unit_power(self, name):
        c = constellation(name)
        assert abs(c.points.mean()) < 1e-15
        assert np.mean(np.abs(c.points) ** 2) == pytest.approx(1.0, abs=1e-14)

    @pytest.mark.parametrize("name", NAMES)
    def test_labels_bijective(self, name):
        c = constellation(name)
        assert len({tuple(r) for r in c.labels}) == c.M == 2**c.q

    @pytest.mark.parametrize("name", NAMES)
    def test_gray_neighbours(self, name):
        # nearest neighbours differ in exactly one bit
        c = constellation(name)
        d = np.abs(c.points[:, None] - c.points[None, :])
        dmin = np.min(d[d > 1e-9])
        for a, b in zip(*np.nonzero(np.isclose(d, dmin))):
            assert np.sum(c.labels[a] != c.labels[b]) == 1

    def test_bpsk_labels(self):
        c = constellation("bpsk")
        assert c.map_bits([0, 1]).tolist() == [1, -1]
        assert c.k_w == 0.5 and constellation("qpsk").k_w == 1.0

    @pytest.mark.parametrize("name", NAMES)
    def test_map_bits_roundtrip(self, name):
        c = constellation(name)
        bits = np.random.default_rng(0).integers(0, 2, 40 * c.q)
        sym = c.map_bits(bits)
        idx = [int(np.argmin(np.abs(c.points - s))) for s in sym]
        assert np.array_equal(c.symbol_bits(idx), bits)

    def test_unknown(self):
        with pytest.raises(ValueError):
            constellation("64qam")


# --------------------------------------------------------------------------- #
# prior PMF                                                                   #
# --------------------------------------------------------------------------- #


class TestPrior:
    @pytest.mark.parametrize("name", NAMES)
    def test_zero_llrs_uniform(self, name):
        c = constellation(name)
        np.testing.assert_allclose(prior_pmf(np.zeros(c.q), c), np.full(c.M, 1 / c.M))
        m = pmf_moments(prior_pmf(np.zeros(c.q), c), c)
        assert abs(m.mean) < 1e-15 and m.variance == pytest.approx(1.0, abs=1e-14)

    def test_bpsk_infinite(self):
        # +inf is clipped before exponentiation
        p = prior_pmf([np.inf], constellation("bpsk"))
        tail = np.exp(-LLR_CLIP) / (1 + np.exp(-LLR_CLIP))
        assert p[1] == pytest.approx(tail, rel=1e-12) and p[0] == pytest.approx(1 - tail, rel=1e-15)

    def test_qpsk_exhaustive(self):
        # labels 00, 01, 10, 11 with La = (2, -1); 40-digit evaluation
        ref = [0.23688281808991013, 0.64391425988797231, 0.032058603280084988, 0.087144318742032567]
        np.testing.assert_allclose(prior_pmf([2.0, -1.0], constellation("qpsk")), ref, rtol=1e-14)

    @settings(max_examples=50, deadline=None)
    @given(st.sampled_from(NAMES), st.lists(st.floats(-50, 50), min_size=4, max_size=4))
    def test_normalized(self, name, llrs):
        c = constellation(name)
        p = prior_pmf(llrs[: c.q], c)
        assert abs(p.sum() - 1) <= 1e-12 and np.all(p > 0)


# --------------------------------------------------------------------------- #
# posterior and moments                                                       #
# --------------------------------------------------------------------------- #


class TestPosterior:
    def test_infinite_variance_returns_prior(self):
        c = constellation("16qam")
        P = prior_pmf([0.3, -2.0, 1.0, 5.0], c)
        D = posterior_pmf(P, GaussianMsg(0.3 + 0.1j, np.inf), c)
        assert np.array_equal(D, P)

    def test_point_mass_limit(self):
        c = constellation("8psk")
        D = posterior_pmf(np.full(8, 1 / 8), GaussianMsg(c.points[3], 1e-6), c)
        assert D[3] == pytest.approx(1.0)

    def test_bpsk_direct_formula(self):
        # 40-digit evaluation of 0.7 exp(-0.32) and 0.3 exp(-0.72), normalized
        D = posterior_pmf(np.array([0.7, 0.3]), GaussianMsg(0.2, 1.0), constellation("bpsk"))
        np.testing.assert_allclose(D, [0.77683175740588797, 0.22316824259411203], rtol=1e-14)

    def test_degenerate(self):
        c = constellation("bpsk")
        with pytest.raises(DegeneratePmf):
            posterior_pmf(np.array([np.nan, np.nan]), GaussianMsg(0.0, 1.0), c)

    def test_moments_point_mass(self):
        c = constellation("qpsk")
        m = pmf_moments(np.eye(4)[2], c)
        assert m.mean == c.points[2] and m.variance == 0.0

    def test_moments_16qam_exhaustive(self):
        c = constellation("16qam")
        p = np.random.default_rng(3).dirichlet(np.ones(16))
        mu = sum(p[i] * c.points[i] for i in range(16))
        var = sum(p[i] * abs(c.points[i]) ** 2 for i in range(16)) - abs(mu) ** 2
        m = pmf_moments(p, c)
        assert m.mean == pytest.approx(mu, abs=1e-15)
        assert m.variance == pytest.approx(var, abs=1e-14)


# --------------------------------------------------------------------------- #
# Gaussian division and damping                                               #
# --------------------------------------------------------------------------- #


class TestDivide:
    def test_half_variance_identity(self):
        r = gaussian_divide(GaussianMsg(0.3 - 0.2j, 0.5), GaussianMsg(0.1j, 1.0))
        assert r.variance == pytest.approx(1.0)
        assert r.mean == pytest.approx(2 * (0.3 - 0.2j) - 0.1j)

    def test_certain_limit(self):
        r = gaussian_divide(GaussianMsg(0.7, 1e-15), GaussianMsg(-0.2, 2.0))
        assert r.mean == pytest.approx(0.7) and 0 < r.variance < 1e-14

    def test_direct_example(self):
        r = gaussian_divide(GaussianMsg(0.5, 0.2), GaussianMsg(0.1, 1.0))
        assert r.mean == pytest.approx(0.6, abs=1e-15)
        assert r.variance == pytest.approx(0.25, abs=1e-15)

    def test_negative_variance_grid(self):
        for g, v in itertools.product(np.linspace(0.01, 2, 25), np.linspace(0.01, 2, 25)):
            r = gaussian_divide(GaussianMsg(0.1, g), GaussianMsg(-0.3, v))
            if g < v:
                assert r is not NEG_VARIANCE and r.variance > 0
            else:
                assert r is NEG_VARIANCE

    @settings(max_examples=100, deadline=None)
    @given(st.floats(1e-3, 5), st.floats(1e-3, 5), st.complex_numbers(max_magnitude=3),
           st.complex_numbers(max_magnitude=3))
    def test_round_trip(self, g, v, mu, xe):
        if g >= v * (1 - 1e-6):
            return
        r = gaussian_divide(GaussianMsg(mu, g), GaussianMsg(xe, v))
        # precision addition recovers the posterior
        prec = 1 / r.variance + 1 / v
        mean = (r.mean / r.variance + xe / v) / prec
        assert 1 / prec == pytest.approx(g, rel=1e-9)
        assert abs(mean - mu) <= 1e-8 * max(1.0, abs(mu), abs(xe) * g / (v - g))


class TestDamp:
    def test_beta_zero(self):
        new = GaussianMsg(0.4j, 0.3)
        assert damp(new, GaussianMsg(1.0, 2.0), 0.0) == new

    def test_beta_one(self):
        prev = GaussianMsg(1.0, 2.0)
        assert damp(GaussianMsg(0.4j, 0.3), prev, 1.0) == prev

    def test_direct_example(self):
        r = damp(GaussianMsg(0.0, 1.0), GaussianMsg(2.0, 1.0), 0.5)
        assert r.mean == pytest.approx(1.0) and r.variance == pytest.approx(1.0)

    def test_bad_beta(self):
        with pytest.raises(ValueError):
            damp(GaussianMsg(0, 1), GaussianMsg(0, 1), 1.5)


# --------------------------------------------------------------------------- #
# extrinsic LLRs and hard decisions                                           #
# --------------------------------------------------------------------------- #


class TestLlrs:
    @pytest.mark.parametrize("name", NAMES)
    def test_uniform_zero(self, name):
        c = constellation(name)
        np.testing.assert_allclose(extrinsic_llrs(np.full(c.M, 1 / c.M), np.zeros(c.q), c), 0, atol=1e-14)

    @pytest.mark.parametrize("name", NAMES)
    def test_point_mass_all_zero_label(self, name):
        c = constellation(name)
        idx = int(np.flatnonzero(c.labels.sum(axis=1) == 0)[0])
        np.testing.assert_array_equal(extrinsic_llrs(np.eye(c.M)[idx], np.zeros(c.q), c), LLR_CLIP)

    def test_bpsk_example(self):
        Le = extrinsic_llrs(np.array([0.8, 0.2]), [0.5], constellation("bpsk"))
        assert Le[0] == pytest.approx(0.88629436111989062, abs=1e-14)

    @pytest.mark.parametrize("name", NAMES)
    def test_label_complement_antisymmetry(self, name):
        c = constellation(name)
        flipped = dataclasses.replace(c, labels=(1 - c.labels).astype(c.labels.dtype))
        rng = np.random.default_rng(1)
        D = rng.dirichlet(np.ones(c.M))
        La = rng.standard_normal(c.q)
        np.testing.assert_allclose(extrinsic_llrs(D, -La, flipped), -extrinsic_llrs(D, La, c), atol=1e-12)

    @pytest.mark.parametrize("name", ["bpsk", "qpsk"])
    def test_point_reflection_antisymmetry(self, name):
        # for these maps the label complement is the point reflection
        c = constellation(name)
        D = np.random.default_rng(4).dirichlet(np.ones(c.M))
        comp = [int(np.argmin(np.abs(c.points + c.points[m]))) for m in range(c.M)]
        np.testing.assert_allclose(extrinsic_llrs(D[comp], np.zeros(c.q), c),
                                   -extrinsic_llrs(D, np.zeros(c.q), c), atol=1e-12)

    def test_hard_decide(self):
        c = constellation("bpsk")
        assert hard_decide(np.array([0.0, 1.0]), c) == -1
        assert hard_decide(np.array([0.5, 0.5]), c) == 1
        assert hard_decide(np.array([0.4, 0.6]), c) == -1

    def test_block_matches_scalar(self):
        c = constellation("8psk")
        La = np.random.default_rng(2).standard_normal((5, 3))
        blk = prior_pmf_block(La, c)
        for k in range(5):
            np.testing.assert_allclose(blk[k], prior_pmf(La[k], c))
