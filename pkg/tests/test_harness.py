from __future__ import annotations

import json

import numpy as np
import pytest

from stablelt.functionals import GaussBump, fat_cantor
from stablelt.harness import (
    CONFIG_KEYS,
    ConfigError,
    ExperimentConfig,
    PreconditionError,
    config_from_dict,
    distances,
    gauss_bump_smoothed,
    gh_smoothed,
    load_config,
    run_experiment,
    run_theorem4_5,
    stream_id,
    write_result,
)
from stablelt.path_engine import SamplePath

SMALL = {
    "n_list": [2**6, 2**8, 2**10],
    "replicates": 60,
    "ref_grid": 2**10,
    "chunk": 20,
}


def cfg(experiment, **kw):
    return config_from_dict({"exp_id": f"test-{experiment}", "experiment": experiment, **SMALL, **kw})


class TestConfig:
    def test_round_trip(self):
        c = cfg("t2", x_list=[0.0, 0.5], f_list=[GaussBump(0, 1).to_dict()])
        again = config_from_dict(json.loads(c.to_json()))
        assert again == c and again.config_hash() == c.config_hash()

    def test_hash_ignores_threads_and_output(self):
        a = cfg("t2")
        b = cfg("t2", threads=4, output_dir="/elsewhere")
        assert a.config_hash() == b.config_hash()
        assert a.config_hash() != cfg("t2", master_seed=1).config_hash()

    def test_unknown_key_has_line(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text('{\n  "exp_id": "a",\n  "experiment": "t2",\n  "bogus": 1\n}\n')
        with pytest.raises(ConfigError, match="line 4"):
            load_config(p)

    def test_bad_json_has_line(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text('{\n  "exp_id": "a",\n  "experiment": "t2",\n}\n')
        with pytest.raises(ConfigError, match="line 4"):
            load_config(p)

    @pytest.mark.parametrize(
        "kw",
        [
            {"n_list": [8, 8]},
            {"replicates": 1},
            {"experiment": "t9"},
            {"model": {"regime": "C2", "coeffs": [2.0]}},
            {"innovation": {"law": "mixture", "weights": [1.0], "means": [1.0], "sds": [1.0]}},
            {"f_list": [{"kind": "Nope"}]},
            {"beta_exponent": 1.0},
        ],
    )
    def test_invalid(self, kw):
        raw = {"exp_id": "x", "experiment": "t2", **kw}
        with pytest.raises(ConfigError):
            config_from_dict(raw)

    def test_overrides(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"exp_id": "a", "experiment": "t2"}))
        c = load_config(p, {"master_seed": 7, "threads": None})
        assert c.master_seed == 7 and c.threads == 1

    def test_keys_match_dataclass(self):
        assert set(CONFIG_KEYS) == set(ExperimentConfig.__dataclass_fields__)


class TestDistances:
    def test_examples(self):
        assert distances([1.0, 2.0], [1.0, 2.0]) == {"ks": 0.0, "wasserstein1": 0.0}
        assert distances([0.0, 0.0], [1.0, 1.0]) == {"ks": 1.0, "wasserstein1": 1.0}
        d = distances([0.0, 1.0], [0.0, 2.0])
        assert d["ks"] == pytest.approx(0.5) and d["wasserstein1"] == pytest.approx(0.5)

    def test_empty(self):
        with pytest.raises(ValueError):
            distances([], [1.0])

    def test_stream_layout(self):
        assert stream_id(0, 5) == 5 and stream_id(2, 1) == (2 << 32) + 1


class TestT2:
    def test_zero_function(self):
        r = run_experiment(cfg("t2", f_list=[{"kind": "Zero"}]))
        assert r.passed and all(v == 0 for v in r.metric("ks"))
        assert all(v == 0 for v in r.metric("mean_T"))

    def test_counterexample_aborts(self):
        with pytest.raises(PreconditionError) as exc:
            run_experiment(cfg("t2", f_list=[fat_cantor(12).to_dict()]))
        assert "plateau" in str(exc.value) and exc.value.report

    def test_two_replicates(self):
        r = run_experiment(cfg("t2", replicates=2, chunk=2))
        assert all(0 <= v <= 1 for v in r.metric("ks"))

    def test_result_shapes(self):
        c = cfg("t2")
        r = run_experiment(c)
        assert r.detail["coupled"] and r.detail["mode"] == "exact-scale"
        assert all(len(v) == c.replicates for v in r.vectors.values())
        assert all(v >= 0 for v in r.metric("wasserstein1"))
        assert r.provenance["config_hash"] == c.config_hash()

    def test_uncoupled_uses_other_streams(self):
        a = run_experiment(cfg("t2"))
        b = run_experiment(cfg("t2", coupled=False))
        assert not b.detail["coupled"]
        assert a.metric("mean_T") != b.metric("mean_T")
        assert a.metric("mean_ref") == b.metric("mean_ref")

    def test_heavy_tail_shape_mode(self):
        r = run_experiment(
            cfg(
                "t2",
                innovation={"law": "stable", "alpha": 1.5},
                model={"regime": "C2", "coeffs": [1.0]},
                replicates=40,
                ref_grid=256,
                n_list=[64, 256],
            )
        )
        assert r.detail["mode"] == "shape-comparison" and r.detail["limit"]["kind"] == "levy"


class TestT3:
    def test_variant_ii_power_cusp(self):
        r = run_experiment(cfg("t3ii", f_list=[{"kind": "PowerCusp", "tau": -0.4, "radius": 1.0}]))
        assert r.detail["q"] == 1
        ks = r.metric("ks")
        assert ks[-1] <= 0.35  # small sample; the trend check lives in the acceptance-style runs

    def test_variant_ii_presum(self):
        r = run_experiment(
            cfg(
                "t3ii",
                innovation={"law": "mixture", "weights": [1.0], "means": [0.0], "sds": [1.0], "char_integrable_power": 3.0},
                f_list=[{"kind": "GaussBump", "center": 0.0, "width": 1.0}],
                x_list=[2.0],
            )
        )
        assert r.detail["q"] == 3
        assert r.detail["presum_max_abs"] < 0.05

    def test_variant_i_interval_union(self):
        ivs = [[k / 50, k / 50 + 0.01] for k in range(-50, 50)]
        r = run_experiment(cfg("t3i", f_list=[{"kind": "IntervalUnion", "intervals": ivs}]))
        assert "ks" in {row["metric"] for row in r.rows}

    def test_variant_i_rejects_unbounded(self):
        with pytest.raises(PreconditionError):
            run_experiment(cfg("t3i", f_list=[{"kind": "PowerCusp", "tau": -0.4, "radius": 1.0}]))


class TestT4T5:
    def identity(self, lo, hi):
        n = 2**12
        t = np.arange(n + 1) / n
        return SamplePath(t, np.tile(t, (hi - lo, 1)), {"H": 0.5})

    def test_identity_path(self):
        c = cfg("t4", n_list=[2**6, 2**8, 2**10, 2**12], ref_grid=2**12, x_list=[0.5], eta=2**-8,
                f_list=[{"kind": "Indicator", "c": 0.0, "d": 1.0}], replicates=4, chunk=4)
        r = run_theorem4_5(c, path_fn=self.identity)
        d2 = r.detail["verdicts"][0]["mean_D2"]
        assert d2[-1] < d2[0] and d2[-1] < 1e-3
        assert r.metric("mean_L")[0] == pytest.approx(1.0)

    def test_zero_function(self):
        r = run_experiment(cfg("t4", f_list=[{"kind": "Zero"}]))
        assert r.passed and all(v == 0 for v in r.metric("mean_D2_sum"))

    def test_t5_uses_integral_form(self):
        r = run_experiment(cfg("t5", lfsm={"alpha": 2.0, "H": 0.5}))
        assert r.detail["form"] == "integral" and r.metric("mean_D2_integral")


class TestP6Gap:
    def test_gh_matches_closed_form(self):
        # 21 nodes resolve the z-integral while beta * eps stays below the bump width
        f = GaussBump(0.3, 0.7)
        y = np.linspace(-3, 3, 41)
        for beta, eps in [(4.0, 0.1), (40.0, 0.01), (1.0, 0.7), (0.5, 1.0)]:
            assert np.max(np.abs(gh_smoothed(f, beta, eps, y) - gauss_bump_smoothed(f, beta, eps, y))) <= 1e-8

    def test_gh_nodes_knob(self):
        f = GaussBump(0.0, 0.5)
        y = np.linspace(-2, 2, 21)
        exact = gauss_bump_smoothed(f, 4.0, 0.5, y)
        errs = [np.max(np.abs(gh_smoothed(f, 4.0, 0.5, y, nodes) - exact)) for nodes in (21, 61, 121)]
        assert errs[0] > errs[1] > errs[2]

    def test_gap_vanishes_for_tiny_eps(self):
        r = run_experiment(cfg("p6", eps_list=[1e-9, 1e-10], f_list=[GaussBump(0, 1).to_dict()]))
        assert max(r.metric("gap")) < 1e-12

    def test_table(self):
        r = run_experiment(cfg("p6", eps_list=[0.5, 0.0625]))
        grid = r.detail["gap_table"]["Indicator(-1,1)"]
        assert len(grid) == 3 and len(grid[0]) == 2
        assert grid[-1][1] < grid[-1][0]
        assert r.passed == r.detail["verdicts"][0]["last_row_increasing_in_eps"]

    def test_needs_two_eps(self):
        with pytest.raises(ConfigError):
            run_experiment(cfg("p6", eps_list=[0.5]))


class TestP11AndDiagnostics:
    def test_p11(self):
        r = run_experiment(cfg("p11", lfsm={"alpha": 2.0, "H": 0.5}, eps_list=[0.5, 0.25, 0.125, 0.0625]))
        assert len(r.detail["cauchy_msq"]) == 2

    def test_lemma_dispatch(self):
        r = run_experiment(cfg("lemma12", model={"regime": "C1", "H": 0.7}, lemma_d=0.3, lemma_c=2.5))
        assert not r.passed
        r = run_experiment(cfg("lemma13", model={"regime": "C1", "H": 0.3, "zero_sum": True}))
        assert r.passed


class TestDeterminism:
    def test_threads_do_not_change_tables(self, tmp_path):
        a = cfg("t2", threads=1)
        b = cfg("t2", threads=3)
        ra, rb = run_experiment(a), run_experiment(b)
        assert ra.rows == rb.rows
        pa = write_result(ra, a, tmp_path / "a")
        pb = write_result(rb, b, tmp_path / "b")
        for name in ("summary.json", "tables/metrics.csv", "tables/vectors.csv"):
            assert (pa / name).read_bytes() == (pb / name).read_bytes()

    def test_chunking_does_not_change_rows(self):
        assert run_experiment(cfg("t2", chunk=7)).rows == run_experiment(cfg("t2", chunk=60)).rows

    def test_result_files(self, tmp_path):
        c = cfg("t2")
        out = write_result(run_experiment(c), c, tmp_path)
        summary = json.loads((out / "summary.json").read_text())
        assert summary["config"]["threads"] is None and "versions" in summary["provenance"]
        header = (out / "tables" / "metrics.csv").read_text().splitlines()[0]
        assert header.startswith("n,f_id,t,x,metric,value") and header.endswith("config_hash")
