from __future__ import annotations

import csv
import hashlib
import json
import subprocess
import sys

import pytest

from stablelt.cli import main
from stablelt.harness import CONFIG_KEYS, CONFIG_SCHEMA


def write_cfg(tmp_path, name="c.json", **kw):
    raw = {
        "exp_id": "run",
        "experiment": "t2",
        "n_list": [2**6, 2**8],
        "replicates": 20,
        "ref_grid": 2**10,
        "chunk": 10,
        "output_dir": str(tmp_path / "results"),
        **kw,
    }
    p = tmp_path / name
    p.write_text(json.dumps(raw, indent=2))
    return p


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


class TestSimulate:
    def test_writes_csv_and_frame(self, tmp_path):
        assert main(["simulate", "--config", str(write_cfg(tmp_path))]) == 0
        out = tmp_path / "results" / "run" / "paths"
        rows = (out / "path_n256.csv").read_text().splitlines()
        assert rows[0] == "index,time,value" and len(rows) == 1 + 256
        assert (out / "path_n256.sltp").read_bytes()[:4] == b"SLTP"

    def test_seed_and_repeatability(self, tmp_path):
        cfg = str(write_cfg(tmp_path))
        target = tmp_path / "results" / "run" / "paths" / "path_n256.csv"
        main(["simulate", "--config", cfg])
        first = digest(target)
        main(["simulate", "--config", cfg])
        assert digest(target) == first
        main(["simulate", "--config", cfg, "--seed", "5"])
        assert digest(target) != first

    def test_out_override(self, tmp_path):
        cfg = str(write_cfg(tmp_path))
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "other")]) == 0
        assert (tmp_path / "other" / "run" / "paths" / "path_n64.csv").exists()


class TestVerify:
    def test_pass_exit_zero(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, f_list=[{"kind": "Zero"}])
        assert main(["verify", "t2", "--config", str(cfg)]) == 0
        summary = json.loads((tmp_path / "results" / "run" / "summary.json").read_text())
        assert summary["passed"] is True
        assert "PASS" in capsys.readouterr().out

    def test_precondition_exit_two(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, f_list=[{"kind": "FatCantor", "level": 12}])
        assert main(["verify", "t2", "--config", str(cfg)]) == 2
        err = capsys.readouterr().err
        assert "precondition failed" in err and "plateau" in err

    def test_verdict_fail_exit_one(self, tmp_path):
        cfg = write_cfg(tmp_path, model={"regime": "C1", "H": 0.7}, lemma_d=0.3, lemma_c=2.5)
        assert main(["verify", "lemma12", "--config", str(cfg)]) == 1

    def test_schema_error_exit_two(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text('{\n  "exp_id": "x",\n  "experiment": "t2",\n  "replicates": "many"\n}')
        assert main(["verify", "t2", "--config", str(p)]) == 2
        assert "line 4" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert main(["verify", "t2", "--config", str(tmp_path / "none.json")]) == 2

    def test_threads_same_tables(self, tmp_path):
        cfg = str(write_cfg(tmp_path))
        main(["verify", "t2", "--config", cfg, "--threads", "1", "--out", str(tmp_path / "a")])
        main(["verify", "t2", "--config", cfg, "--threads", "2", "--out", str(tmp_path / "b")])
        for name in ("summary.json", "tables/metrics.csv", "tables/vectors.csv"):
            assert digest(tmp_path / "a" / "run" / name) == digest(tmp_path / "b" / "run" / name)


class TestEstimate:
    def test_local_time_csv(self, tmp_path):
        cfg = write_cfg(tmp_path, experiment="t4", lfsm={"alpha": 2.0, "H": 0.5})
        assert main(["estimate", "--config", str(cfg)]) == 0
        with (tmp_path / "results" / "run" / "local_time.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert rows and rows[0]["estimator"] == "window"
        eta = 2**-6
        assert sum(float(r["value"]) for r in rows) * eta == pytest.approx(1.0)


class TestReport:
    def test_empty(self, tmp_path, capsys):
        (tmp_path / "empty").mkdir()
        assert main(["report", str(tmp_path / "empty")]) == 2
        assert "no results" in capsys.readouterr().err

    def test_single_and_multi(self, tmp_path):
        res = tmp_path / "results"
        main(["verify", "t2", "--config", str(write_cfg(tmp_path))])
        assert main(["report", str(res)]) == 0
        with (res / "report" / "series_t2.csv").open() as fh:
            series = list(csv.DictReader(fh))
        assert [int(r["n"]) for r in series] == [64, 256]
        main(["verify", "lemma13", "--config", str(write_cfg(tmp_path, "d.json", exp_id="lem", model={"regime": "C1", "H": 0.3, "zero_sum": True}))])
        main(["verify", "t2", "--config", str(write_cfg(tmp_path, "e.json", exp_id="again"))])
        assert main(["report", str(res), "--out", str(tmp_path / "rep")]) == 0
        md = (tmp_path / "rep" / "report.md").read_text()
        assert md.index("## lemma13") < md.index("## t2")
        assert md.index("| again | fail |") < md.index("| run | fail |")


class TestHelp:
    def test_help_lists_every_key(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0
        text = capsys.readouterr().out
        for key in CONFIG_KEYS:
            assert f"  {key}" in text
            assert CONFIG_SCHEMA["properties"][key]["description"] in text

    def test_schema_command(self, capsys):
        assert main(["schema"]) == 0
        assert json.loads(capsys.readouterr().out) == CONFIG_SCHEMA

    def test_console_script(self):
        out = subprocess.run([sys.executable, "-m", "stablelt.cli", "schema"], capture_output=True, text=True)
        assert out.returncode == 0 and '"exp_id"' in out.stdout

    def test_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["verify", "nope", "--config", "x"])
        assert exc.value.code == 2
