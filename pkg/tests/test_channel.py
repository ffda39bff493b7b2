import io
import math

import numpy as np
import pytest
from scipy import integrate, stats

from ecctlab.channel import (
    ChannelSample, NoiseModel, bpsk_modulate, hard_decision, make_sample,
    preprocess, q_function, sample_rng, samples_to_csv, sigma_from_ebn0,
    tail_probability, transmit,
)
from ecctlab.codes import CodeError, derive_generator, hamming_7_4


class TestBPSK:
    def test_all_zero(self):
        assert bpsk_modulate([0, 0, 0]).tolist() == [1.0, 1.0, 1.0]

    def test_definition(self):
        assert bpsk_modulate([1, 0]).tolist() == [-1.0, 1.0]

    def test_group_homomorphism(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            a = rng.integers(0, 2, size=9)
            b = rng.integers(0, 2, size=9)
            lhs = bpsk_modulate(a ^ b)
            rhs = bpsk_modulate(a) * bpsk_modulate(b)
            assert np.array_equal(lhs, rhs)


class TestNoiseModel:
    def test_sigma_relation(self):
        nm = NoiseModel.from_ebn0(2.0, 4.0 / 7.0)
        assert math.isclose(nm.sigma**2, 1.0 / (2.0 * (4.0 / 7.0) * 10.0 ** 0.2), rel_tol=1e-12)

    def test_inconsistent_sigma_rejected(self):
        with pytest.raises(ValueError):
            NoiseModel(ebn0_db=2.0, rate=0.5, sigma=1.0)

    def test_bad_rate(self):
        with pytest.raises(ValueError):
            NoiseModel.from_ebn0(2.0, 0.0)


class TestTransmit:
    def test_noiseless_limit(self):
        # tiny sigma: output is the symbols to machine precision
        nm = NoiseModel.from_ebn0(200.0, 0.5)
        xs = bpsk_modulate([0, 1, 0, 1])
        y = transmit(xs, nm, np.random.default_rng(0))
        assert np.allclose(y, xs, atol=1e-8)

    def test_moments(self):
        nm = NoiseModel.from_ebn0(2.0, 0.5)
        xs = np.ones(100000)
        w = transmit(xs, nm, np.random.default_rng(7)) - xs
        n = len(w)
        assert abs(w.mean()) < 4.0 * nm.sigma / math.sqrt(n)
        assert abs(w.var() - nm.sigma**2) < 0.05 * nm.sigma**2


class TestPreprocess:
    def test_all_plus_one(self):
        H = hamming_7_4()
        y = np.ones(7)
        out = preprocess(y, H)
        assert out.tolist() == [1.0] * 7 + [1.0, 1.0, 1.0]

    def test_single_flip_encodes_column(self):
        H = hamming_7_4()
        for j in range(H.n):
            y = np.ones(7)
            y[j] = -1.0
            out = preprocess(y, H)
            expected = 1.0 - 2.0 * H.entries[:, j].astype(float)
            assert out[7:].tolist() == expected.tolist()

    def test_codewords_have_clean_syndrome(self):
        H = hamming_7_4()
        G = derive_generator(H)
        for msg in range(16):
            u = np.array([(msg >> i) & 1 for i in range(4)], dtype=np.uint8)
            y = bpsk_modulate(G.encode(u))
            out = preprocess(y, H)
            assert out[7:].tolist() == [1.0, 1.0, 1.0]

    def test_output_length(self):
        H = hamming_7_4()
        rng = np.random.default_rng(0)
        for _ in range(20):
            out = preprocess(rng.standard_normal(7), H)
            assert out.shape == (10,)
            assert (out[:7] >= 0).all()
            assert set(np.unique(out[7:])) <= {-1.0, 1.0}

    def test_length_mismatch(self):
        with pytest.raises(CodeError):
            preprocess(np.ones(6), hamming_7_4())

    def test_zero_one_syndrome_flag(self):
        H = hamming_7_4()
        y = np.ones(7)
        y[0] = -1.0
        out = preprocess(y, H, syndrome_pm1=False)
        assert out[7:].tolist() == H.entries[:, 0].astype(float).tolist()


class TestReconstruction:
    def test_sign_identity(self):
        H = hamming_7_4()
        nm = NoiseModel.from_ebn0(2.0, H.rate())
        G = derive_generator(H)
        rng = np.random.default_rng(11)
        for i in range(200):
            msg = rng.integers(0, 2, size=4).astype(np.uint8)
            s = make_sample(G.encode(msg), H, nm, sample_rng(5, i))
            assert np.array_equal(s.y, s.xs * s.z)
            assert np.array_equal(np.sign(s.y) * np.sign(s.z), s.xs)

    def test_target_is_hard_noise(self):
        H = hamming_7_4()
        nm = NoiseModel.from_ebn0(0.0, H.rate())
        s = make_sample(np.zeros(7, dtype=np.uint8), H, nm, sample_rng(3, 0))
        assert np.array_equal(s.target, (s.z < 0).astype(float))


class TestChannelSymmetry:
    """(|y|, syndrome, target) has the same law for any transmitted codeword."""

    def test_two_sample_ks_and_target_rates(self):
        H = hamming_7_4()
        nm = NoiseModel.from_ebn0(2.0, H.rate())
        G = derive_generator(H)
        fixed = G.encode(np.array([1, 0, 1, 1], dtype=np.uint8))
        n_samples = 10000
        zero_abs, cw_abs = [], []
        zero_tgt, cw_tgt = [], []
        for i in range(n_samples):
            a = make_sample(np.zeros(7, dtype=np.uint8), H, nm, sample_rng(21, i))
            b = make_sample(fixed, H, nm, sample_rng(22, i))
            zero_abs.append(np.abs(a.y))
            cw_abs.append(np.abs(b.y))
            zero_tgt.append(a.target)
            cw_tgt.append(b.target)
        ks = stats.ks_2samp(np.concatenate(zero_abs), np.concatenate(cw_abs))
        assert ks.pvalue > 0.01
        za = np.array(zero_tgt).mean(axis=0)
        cb = np.array(cw_tgt).mean(axis=0)
        p = float(q_function(1.0 / nm.sigma))
        se = math.sqrt(p * (1 - p) / n_samples)
        assert np.abs(za - cb).max() < 6.0 * se  # two-sample comparison
        assert np.abs(za - p).max() < 4.0 * se


class TestQFunction:
    def test_half_at_zero(self):
        assert q_function(0.0) == 0.5

    def test_symmetry(self):
        for t in (0.3, 1.0, 2.5):
            assert math.isclose(float(q_function(-t) + q_function(t)), 1.0, rel_tol=1e-12)

    def test_against_quadrature(self):
        # independent oracle: integrate the standard normal density directly
        def tail(t):
            val, _ = integrate.quad(
                lambda x: math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi), t, 40.0
            )
            return val

        for t in (0.0, 0.5, 1.2816, 2.0, 3.0):
            assert abs(float(q_function(t)) - tail(t)) < 1e-10
        assert abs(float(q_function(1.2816)) - 0.1000) < 1e-4


class TestTailProbability:
    def test_vanishes_for_large_budget(self):
        assert tail_probability(1e6, 1.0, 0.5, 16) < 1e-300 * 1e6 or \
            tail_probability(1e6, 1.0, 0.5, 16) == 0.0

    def test_tau_one_value(self):
        expected = 0.5 + float(q_function(2.0))
        assert math.isclose(tail_probability(1.0, 1.0, 1.0, 1), expected, rel_tol=1e-12)

    def test_clamped_to_unit(self):
        assert tail_probability(1e-6, 1.0, 1.0, 1000) == 1.0

    def test_monte_carlo(self):
        # P(|y_i| > tau) for y = +-1 + noise, against the closed form
        rho = 0.7
        tau = 1.5
        n_draws = 10**6
        rng = np.random.default_rng(99)
        bits = rng.integers(0, 2, size=n_draws)
        y = bpsk_modulate(bits) + rho * rng.standard_normal(n_draws)
        frac = float((np.abs(y) > tau).mean())
        closed = float(q_function((tau - 1) / rho) + q_function((tau + 1) / rho))
        se = math.sqrt(closed * (1 - closed) / n_draws)
        assert abs(frac - closed) < 3.0 * se
        assert math.isclose(tail_probability(tau, 1.0, rho, 1), closed, rel_tol=1e-12)

    def test_rejects_bad_args(self):
        with pytest.raises(ValueError):
            tail_probability(-1.0, 1.0, 1.0, 4)
        with pytest.raises(ValueError):
            tail_probability(1.0, 1.0, 0.0, 4)


class TestCSVDump:
    def test_columns(self):
        H = hamming_7_4()
        nm = NoiseModel.from_ebn0(2.0, H.rate())
        samples = [
            make_sample(np.zeros(7, dtype=np.uint8), H, nm, sample_rng(0, i))
            for i in range(3)
        ]
        buf = io.StringIO()
        samples_to_csv(samples, buf)
        lines = buf.getvalue().strip().splitlines()
        assert lines[0].split(",")[:2] == ["index", "y0"]
        assert len(lines) == 4
        assert len(lines[1].split(",")) == 1 + 3 * 7


class TestSampleRNG:
    def test_streams_are_deterministic_and_distinct(self):
        a = sample_rng(5, 0).standard_normal(4)
        b = sample_rng(5, 0).standard_normal(4)
        c = sample_rng(5, 1).standard_normal(4)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)
