from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from stablelt.linear_model import C2, CoefficientModel, SlowlyVarying, norming
from stablelt.numerics import compensated_cumsum, ks_distance
from stablelt.path_engine import (
    SamplePath,
    TruncationPolicy,
    default_truncation,
    direct_convolve,
    fft_convolve,
    normalized_path,
    partial_sums,
    read_frame,
    s_star,
    s_star_weights,
    simulate_linear_process,
    simulate_partial_sums,
    write_frame,
    write_path_csv,
)
from stablelt.stable_rng import GaussianMixture, InnovationSpec, derive_stream, sample_innovations

GAUSS = InnovationSpec.stable(2.0)
STD_NORMAL = InnovationSpec(GaussianMixture((1.0,), (0.0,), (1.0,)))


def path_of(values):
    v = np.asarray(values, float)
    return SamplePath(np.arange(1, v.shape[-1] + 1) / v.shape[-1], v)


class TestSamplePath:
    def test_invariants(self):
        with pytest.raises(ValueError):
            SamplePath(np.array([0.0, 0.0, 1.0]), np.zeros(3))
        with pytest.raises(ValueError):
            SamplePath(np.array([0.0, 0.1, 0.3]), np.zeros(3))
        with pytest.raises(ValueError):
            SamplePath(np.arange(3.0), np.zeros(4))

    def test_row_and_subsample(self):
        p = SamplePath(np.arange(8) / 8, np.arange(16.0).reshape(2, 8))
        assert p.replicates == 2 and p.row(1).values[0] == 8.0
        s = p.subsample(4)
        assert s.dt == 0.5 and s.values.tolist() == [[0, 4], [8, 12]]

    def test_truncation_policy(self):
        with pytest.raises(ValueError):
            TruncationPolicy("truncate", -1)
        with pytest.raises(ValueError):
            TruncationPolicy("circular", 1)
        assert default_truncation(CoefficientModel.farima(0.3), 100).m == 2**14
        assert default_truncation(CoefficientModel.farima(0.3), 2**13).m == 2**15


class TestConvolution:
    def test_identity_filter(self):
        spec = GAUSS
        model = CoefficientModel(C2((1.0,)), 2.0)
        x = simulate_linear_process(model, spec, 50, TruncationPolicy("truncate", 0), derive_stream(0, 0))
        xi = sample_innovations(spec, derive_stream(0, 0), (50,))
        assert np.array_equal(x.values, xi) or np.allclose(x.values, xi, rtol=0, atol=1e-12)

    def test_hand_convolution(self):
        out = fft_convolve(np.array([1.0, 2.0, 3.0]), np.array([1.0, 1.0]))
        # xi_0 = 1, xi_1 = 2, xi_2 = 3; with m = 1, X_1 = xi_1 + xi_0, X_2 = xi_2 + xi_1
        assert out[1:3] == pytest.approx([3.0, 5.0])

    def test_fft_matches_direct_farima(self):
        n, m = 2**10, 2**14
        c = CoefficientModel.farima(0.3)
        from stablelt.linear_model import coefficients

        kernel = coefficients(c, n + m)
        xi = sample_innovations(GAUSS, derive_stream(1, 0), (n + m,))
        fast = fft_convolve(xi, kernel)[m : m + n]
        slow = direct_convolve(xi, kernel)[m : m + n]
        assert np.max(np.abs(fast - slow)) / np.max(np.abs(slow)) <= 1e-9

    @settings(max_examples=25, deadline=None)
    @given(
        st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=60),
        st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=60),
    )
    def test_fft_matches_direct_property(self, a, b):
        fast = fft_convolve(np.array(a), np.array(b))
        slow = direct_convolve(np.array(a), np.array(b))
        scale = max(1.0, float(np.sum(np.abs(a)) * np.max(np.abs(b))))
        assert np.max(np.abs(fast - slow)) <= 1e-9 * scale

    def test_fft_size_cap(self):
        from stablelt.path_engine import _fft_size

        with pytest.raises(OverflowError, match="cap"):
            _fft_size(2**28)

    def test_exact_finite_first_term(self):
        model = CoefficientModel.farima(0.3)
        x = simulate_linear_process(model, GAUSS, 5, TruncationPolicy.exact_finite(), derive_stream(2, 0))
        xi = sample_innovations(GAUSS, derive_stream(2, 0), (5,))
        assert x.values[0] == pytest.approx(xi[0])
        assert x.values[1] == pytest.approx(xi[1] + 0.3 * xi[0])


class TestPartialSums:
    def test_trivial(self):
        assert partial_sums(path_of([1, 1, 1])).values.tolist() == [1, 2, 3]
        assert partial_sums(path_of([1, -1, 1, -1])).values.tolist() == [1, 0, 1, 0]

    def test_compensation(self):
        x = np.array([1.0, 1e100, 1.0, -1e100] * 3)
        assert compensated_cumsum(x)[-1] == 6.0
        assert np.cumsum(x)[-1] != 6.0

    def test_batch_independence(self):
        x = np.random.default_rng(0).standard_normal((5, 9000))
        whole = compensated_cumsum(x)
        one = compensated_cumsum(x[2])
        assert np.array_equal(whole[2], one)

    def test_iid_clt(self):
        # scaled-down: n = 2^12, 10^4 replicates
        n, reps = 2**12, 10**4
        model = CoefficientModel(C2((1.0,)), 2.0)
        vals = []
        for s in range(0, reps, 1000):
            streams = [derive_stream(3, i) for i in range(s, s + 1000)]
            p = simulate_partial_sums(model, STD_NORMAL, n, streams, policy=TruncationPolicy("truncate", 0), normalize=False)
            vals.append(p.values[:, -1] / math.sqrt(n))
        assert stats.kstest(np.concatenate(vals), "norm").statistic <= 0.01


class TestNormalization:
    def test_trivial(self):
        p = normalized_path(path_of([2.0, 4.0]), 2.0)
        assert p.values.tolist() == [1.0, 2.0] and p.meta["normalization"] == 2.0
        q = normalized_path(path_of([2.0, 4.0]), 1.0)
        assert q.values.tolist() == [2.0, 4.0]
        with pytest.raises(ValueError):
            normalized_path(path_of([1.0]), 0.0)

    def test_c2_gaussian_limit(self):
        model = CoefficientModel(C2((1.0, 0.5, -0.25)), 2.0)
        # 10^4 replicates: at 2000 the KS noise alone is about 0.02
        vals = []
        for s in range(0, 10**4, 1000):
            streams = [derive_stream(4, i) for i in range(s, s + 1000)]
            vals.append(simulate_partial_sums(model, GAUSS, 2**14, streams).values[:, -1])
        # gamma_n = (sum c) b_n, so the limit at t = 1 is Z_2(1) ~ N(0, 2)
        assert stats.kstest(np.concatenate(vals), stats.norm(0, math.sqrt(2)).cdf).statistic <= 0.02

    def test_stationarity(self):
        model = CoefficientModel.farima(0.3)
        streams = [derive_stream(5, i) for i in range(10**4)]
        x = simulate_linear_process(model, GAUSS, 64, TruncationPolicy("truncate", 2**12), streams)
        assert ks_distance(x.values[:, 0], x.values[:, -1]) <= 0.02


class TestSStar:
    def test_single_term(self):
        model = CoefficientModel.farima(0.3)
        w = s_star_weights(model, SlowlyVarying.constant(1.0), 1)
        _, gamma = norming(model, SlowlyVarying.constant(1.0), 1)
        assert w.tolist() == [1.0 / gamma]

    def test_simplified_levy_weights(self):
        model = CoefficientModel(C2((1.0,)), 1.5)
        w = s_star_weights(model, SlowlyVarying.constant(1.0), 64, "simplified")
        assert np.allclose(w, 64 ** (-1 / 1.5))

    def test_simplified_variance(self):
        from stablelt.linear_model import C1

        model = CoefficientModel(C1(0.7, 2.0), 2.0)
        j = 10**4
        draws = np.concatenate([s_star(model, GAUSS, j, derive_stream(6, i), "simplified", size=1000)[0] for i in range(20)])
        k = np.arange(1, j + 1)
        target = 2 * np.mean((k / j) ** 0.4)
        assert abs(draws.var() / target - 1) <= 0.03
        assert target == pytest.approx(2 / 1.4, rel=1e-3)

    def test_form_validation(self):
        with pytest.raises(ValueError):
            s_star_weights(CoefficientModel.farima(0.3), SlowlyVarying.constant(1.0), 4, "other")


class TestExport:
    def test_csv(self, tmp_path):
        p = write_path_csv(path_of([0.5, 1.5]), tmp_path / "p.csv")
        assert p.read_text().splitlines() == ["index,time,value", "0,0.5,0.5", "1,1.0,1.5"]

    def test_csv_needs_single_row(self, tmp_path):
        with pytest.raises(ValueError):
            write_path_csv(path_of(np.zeros((2, 3))), tmp_path / "p.csv")

    @pytest.mark.parametrize("dtype", ["<f8", "<f4"])
    def test_frame_round_trip(self, tmp_path, dtype):
        p = SamplePath(np.arange(5) / 4, np.arange(10.0).reshape(2, 5))
        q = read_frame(write_frame(p, tmp_path / "p.sltp", dtype))
        assert np.array_equal(q.times, p.times) and np.array_equal(q.values, p.values)
        raw = (tmp_path / "p.sltp").read_bytes()
        assert raw[:4] == b"SLTP"

    def test_frame_bad_magic(self, tmp_path):
        f = tmp_path / "x.sltp"
        f.write_bytes(b"NOPE" + bytes(40))
        with pytest.raises(ValueError, match="magic"):
            read_frame(f)
