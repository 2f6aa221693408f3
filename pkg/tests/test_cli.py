import json
import subprocess
import sys

import numpy as np
import pytest

from adsorb.cli import (EXIT_AGENT, EXIT_ERROR, EXIT_FILTERED, EXIT_OK, EXIT_USAGE, main,
                        parse_miller)
from adsorb.io import parse_extxyz, write_extxyz
from adsorb.structures import Lattice, Structure

from conftest import FIXTURES, TEST_MOCKS

H_PT = ["--adsorbate", "H", "--catalyst", "Pt", "--miller", "1,1,1",
        "--lattice-constant", "4.0"]
ORACLE = f"mock:{FIXTURES / 'mocks'}"


def run(tmp_path, *extra, name="out"):
    out = tmp_path / name
    code = main(["run", *H_PT, "--llm", ORACLE, "--output", str(out), "--no-timestamps",
                 *extra])
    return code, out


class TestParsers:
    def test_miller(self):
        assert parse_miller("1,1,1") == (1, 1, 1)
        assert parse_miller("100") == (1, 0, 0)

    def test_miller_bad(self):
        with pytest.raises(Exception):
            parse_miller("1,x,1")


class TestRun:
    def test_agent_run_outputs(self, tmp_path):
        code, out = run(tmp_path)
        assert code == EXIT_OK
        report = json.loads((out / "report.json").read_text())
        assert report["status"] == "ok" and report["delta_e_ads"] < 0
        assert report["strategy"] == "agent" and report["n_init"] == 8
        assert report["solution"]["site_type"] == "hollow"
        assert "wall_time_s" not in report
        best = parse_extxyz((out / "best.extxyz").read_text())
        assert (best.tags == 2).sum() == 1
        transcript = json.loads((out / "transcript.json").read_text())
        assert transcript and transcript[0]["module"] == "planner"

    def test_byte_identical(self, tmp_path):
        _, a = run(tmp_path, name="a")
        _, b = run(tmp_path, name="b")
        assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()

    def test_timestamps_by_default(self, tmp_path):
        out = tmp_path / "t"
        assert main(["run", *H_PT, "--llm", ORACLE, "--output", str(out)]) == EXIT_OK
        assert "wall_time_s" in json.loads((out / "report.json").read_text())

    def test_ini_then_flag_override(self, tmp_path):
        ini = tmp_path / "cfg.ini"
        ini.write_text("[run]\nseed = 5\nstrategy = heuristic\n[relax]\nmax_steps = 7\n")
        code, out = run(tmp_path, "--config", str(ini), "--seed", "9")
        assert code in (EXIT_OK, EXIT_FILTERED)
        cfg = json.loads((out / "report.json").read_text())["config"]
        assert cfg["seed"] == 9 and cfg["strategy"] == "heuristic" and cfg["max_steps"] == 7

    def test_unknown_ini_key(self, tmp_path):
        ini = tmp_path / "cfg.ini"
        ini.write_text("[run]\nsede = 5\n")
        code, _ = run(tmp_path, "--config", str(ini))
        assert code == EXIT_USAGE

    def test_unknown_flag(self, tmp_path):
        with pytest.raises(SystemExit) as info:
            run(tmp_path, "--no-such-flag")
        assert info.value.code == EXIT_USAGE

    def test_all_filtered(self, tmp_path, capsys):
        code, _ = run(tmp_path, "--desorption-distance", "0.5")
        assert code == EXIT_FILTERED
        assert "filtered" in capsys.readouterr().err

    def test_agent_failure(self, tmp_path):
        out = tmp_path / "f"
        code = main(["run", "--adsorbate", "OH", "--catalyst", "Pt", "--miller", "1,0,0",
                     "--llm", f"mock:{TEST_MOCKS}", "--output", str(out), "--no-timestamps"])
        assert code == EXIT_AGENT

    def test_fallback_heuristic(self, tmp_path):
        out = tmp_path / "f"
        code = main(["run", "--adsorbate", "OH", "--catalyst", "Pt", "--miller", "1,0,0",
                     "--llm", f"mock:{TEST_MOCKS}", "--output", str(out), "--no-timestamps",
                     "--fallback", "heuristic", "--max-steps", "50"])
        assert code in (EXIT_OK, EXIT_FILTERED)
        assert json.loads((out / "report.json").read_text())["fallback"] == "heuristic"

    def test_live_without_key(self, tmp_path, monkeypatch, capsys):
        monkeypatch.delenv("ADSORB_AGENT_API_KEY", raising=False)
        out = tmp_path / "live"
        code = main(["run", *H_PT, "--output", str(out)])
        assert code == EXIT_ERROR
        assert "ADSORB_AGENT_API_KEY" in capsys.readouterr().err


class TestEnumerate:
    def test_counts(self, capsys):
        assert main(["enumerate", "--catalyst", "Pt", "--miller", "1,1,1",
                     "--lattice-constant", "4.0"]) == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["n_sites"] == 24
        assert doc["counts"] == {"ontop": 4, "bridge": 12, "hollow": 8}

    def test_unsupported_catalyst(self):
        assert main(["enumerate", "--catalyst", "Bi2Ti6", "--miller", "1,1,1"]) == EXIT_ERROR


class TestRelax:
    def test_pt_dimer(self, tmp_path, capsys):
        s = Structure(Lattice.cubic(30.0), ["Pt", "Pt"], [[0, 0, 0], [3.0, 0, 0]], [1, 1])
        path = tmp_path / "dimer.extxyz"
        path.write_text(write_extxyz(s))
        out = tmp_path / "relaxed.extxyz"
        code = main(["relax", "--in", str(path), "--out", str(out), "--fmax", "1e-6",
                     "--max-steps", "5000"])
        assert code == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["status"] == "converged"
        final = parse_extxyz(out.read_text())
        d = np.linalg.norm(final.positions[1] - final.positions[0])
        assert d == pytest.approx(2.754, abs=1e-3)

    def test_unknown_element(self, tmp_path, capsys):
        path = tmp_path / "xe.extxyz"
        path.write_text('2\nLattice="30 0 0 0 30 0 0 0 30"\nXe 0 0 0\nXe 4 0 0\n')
        assert main(["relax", "--in", str(path)]) == EXIT_ERROR
        assert "Xe" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["relax", "--in", str(tmp_path / "nope.extxyz")]) == EXIT_ERROR


class TestEvaluate:
    def test_text(self, capsys):
        assert main(["evaluate", str(FIXTURES / "table1.csv")]) == EXIT_OK
        assert "SR (lenient)    85.00 %" in capsys.readouterr().out

    def test_json_with_solutions(self, tmp_path, capsys):
        out = tmp_path / "e.json"
        code = main(["evaluate", str(FIXTURES / "tableS1.csv"), "--solutions",
                     str(FIXTURES / "solutions.json"), "--json", str(out)])
        assert code == EXIT_OK
        doc = json.loads(out.read_text())
        assert doc["consistency"]["ratio"] == pytest.approx(85.0)

    def test_bad_records(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("")
        assert main(["evaluate", str(p)]) == EXIT_ERROR


class TestBuildSlab:
    def test_writes_slab(self, tmp_path):
        out = tmp_path / "slab.extxyz"
        assert main(["build-slab", "--catalyst", "Pd3Cu", "--miller", "1,1,1",
                     "--out", str(out)]) == EXIT_OK
        s = parse_extxyz(out.read_text())
        assert s.symbols.count("Pd") == 3 * s.symbols.count("Cu")

    def test_console_script(self, tmp_path):
        out = tmp_path / "slab.extxyz"
        proc = subprocess.run([sys.executable, "-m", "adsorb", "build-slab", "--catalyst", "Pt",
                               "--miller", "1,0,0", "--out", str(out)],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert out.exists()
