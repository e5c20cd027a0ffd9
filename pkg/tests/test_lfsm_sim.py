from __future__ import annotations

import math

import numpy as np
import pytest

from stablelt.lfsm_sim import (
    LfsmSpec,
    circulant_eigenvalues,
    fbm_covariance,
    fgn_autocovariance,
    limit_spec,
    mvn_constant,
    refinement_sensitivity,
    self_similarity_check,
    simulate_lfsm,
)
from stablelt.linear_model import CoefficientModel
from stablelt.stable_rng import derive_stream


def streams(count, seed=0):
    return [derive_stream(seed, i) for i in range(count)]


class TestSpec:
    def test_kinds(self):
        assert LfsmSpec(2.0, 0.5).kind == "levy"
        assert LfsmSpec(2.0, 0.7).kind == "fbm"
        assert LfsmSpec(1.5, 0.8).kind == "lfsm"
        assert LfsmSpec(1.5, 2 / 3).kind == "levy"

    @pytest.mark.parametrize(
        "kw",
        [dict(alpha=2.0, H=1.0), dict(alpha=2.0, H=0.5, a=0.0), dict(alpha=2.0, H=0.7, beta=0.5), dict(alpha=2.1, H=0.5)],
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            LfsmSpec(**kw)

    def test_levy_without_local_time_allowed(self):
        assert LfsmSpec(0.8, 0.99, local_time=False).kind == "lfsm"
        with pytest.raises(ValueError):
            LfsmSpec(1.0, 1.0 - 1e-13)  # guarded by H < 1 anyway
        assert LfsmSpec(0.9, 1 / 0.9 - 0.2).kind == "lfsm"

    def test_mvn_constant_quadrature(self):
        from scipy.integrate import quad

        H = 0.7
        d = H - 0.5
        val = quad(lambda u: ((1 - u) ** d - (-u) ** d) ** 2, -np.inf, 0)[0] + 1 / (2 * H)
        assert mvn_constant(H) == pytest.approx(val, rel=1e-6)
        assert mvn_constant(0.5) == pytest.approx(1.0)


class TestSimulation:
    def test_starts_at_zero(self):
        for spec in (LfsmSpec(2.0, 0.5), LfsmSpec(2.0, 0.7), LfsmSpec(1.5, 0.8)):
            p = simulate_lfsm(spec, 64, 1.0, streams(3))
            assert np.all(p.values[:, 0] == 0.0)
            assert p.times[-1] == 1.0

    def test_brownian_variance_two(self):
        p = simulate_lfsm(LfsmSpec(2.0, 0.5), 64, 1.0, streams(10**4, seed=1))
        assert abs(p.values[:, -1].var() / 2 - 1) <= 0.03

    def test_fbm_variance(self):
        spec = LfsmSpec(2.0, 0.7)
        p = simulate_lfsm(spec, 128, 1.0, streams(10**4, seed=2))
        assert abs(p.values[:, -1].var() / float(fbm_covariance(spec, 1.0, 1.0)) - 1) <= 0.03

    def test_fbm_increment_autocovariance(self):
        H, n = 0.7, 512
        p = simulate_lfsm(LfsmSpec(2.0, H), n, 1.0, streams(2000, seed=3))
        inc = np.diff(p.values, axis=-1) * n**H / math.sqrt(2 * mvn_constant(H))
        for lag in range(5):
            emp = np.mean(inc[:, : n - lag] * inc[:, lag:])
            assert abs(emp / fgn_autocovariance(H, lag) - 1) <= 0.05

    def test_circulant_nonnegative(self):
        for H in (0.1, 0.5, 0.9):
            assert circulant_eigenvalues(H, 1024).min() >= 0

    def test_symmetry(self):
        p = simulate_lfsm(LfsmSpec(1.5, 0.8), 64, 1.0, streams(4000, seed=4))
        v = p.values[:, -1]
        # heavy tails: use the sign balance rather than moments
        assert abs(np.mean(v > 0) - 0.5) <= 3 * 0.5 / math.sqrt(v.size)

    def test_kernel_matches_fbm(self):
        spec = LfsmSpec(2.0, 0.7)
        p = simulate_lfsm(spec, 64, 1.0, streams(4000, seed=5), method="kernel")
        ratio = p.values[:, -1].var() / float(fbm_covariance(spec, 1.0, 1.0))
        # past truncation at -8 removes a little variance
        assert 0.9 <= ratio <= 1.05

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            simulate_lfsm(LfsmSpec(2.0, 0.5), 1, 1.0, derive_stream(0, 0))
        with pytest.raises(ValueError):
            simulate_lfsm(LfsmSpec(2.0, 0.5), 10, 0.05, derive_stream(0, 0))

    def test_single_stream_gives_1d(self):
        p = simulate_lfsm(LfsmSpec(2.0, 0.7), 16, 2.0, derive_stream(0, 0))
        assert p.values.shape == (33,)

    def test_deterministic(self):
        a = simulate_lfsm(LfsmSpec(1.5, 0.8), 32, 1.0, streams(4))
        b = simulate_lfsm(LfsmSpec(1.5, 0.8), 32, 1.0, streams(4))
        assert np.array_equal(a.values, b.values)


class TestDiagnostics:
    def test_self_similarity_brownian(self):
        assert self_similarity_check(LfsmSpec(2.0, 0.5), 4.0, 64, 10**4) <= 0.02

    def test_self_similarity_levy(self):
        assert self_similarity_check(LfsmSpec(1.5, 1 / 1.5), 2.0, 64, 10**4) <= 0.03

    def test_identical_sample_zero(self):
        from stablelt.numerics import ks_distance

        x = np.random.default_rng(0).standard_normal(100)
        assert ks_distance(x, x) == 0.0

    def test_refinement_sensitivity(self):
        res = refinement_sensitivity(LfsmSpec(2.0, 0.7), 32, streams(4000, seed=6))
        assert res["relative_change"] <= 0.02


def test_limit_spec_scale():
    assert limit_spec(CoefficientModel.farima(0.2)).a == pytest.approx(5.0)
    assert limit_spec(CoefficientModel.iid(1.5)).kind == "levy"
    assert limit_spec(CoefficientModel.iid(1.5)).a == 1.0
