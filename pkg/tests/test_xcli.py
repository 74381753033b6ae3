"""End-to-end tests of the ``coracle`` command line, run as subprocesses."""

import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
FROZEN = ROOT / "tests" / "fixtures" / "frozen.json"


def run(*args, cwd=ROOT):
    cmd = [sys.executable, "-m", "compressed_oracles.xcli", *map(str, args)]
    return subprocess.run(cmd, capture_output=True, text=True, cwd=cwd)


# ---------------------------------------------------------------------------
# Listing
# ---------------------------------------------------------------------------


class TestList:
    def test_json_catalog(self):
        res = run("list", "--json")
        assert res.returncode == 0
        rows = json.loads(res.stdout)
        assert len(rows) >= 20
        assert {"name", "kind", "operation", "anchor", "params"} <= set(rows[0])

    def test_filter_by_kind(self):
        res = run("list", "--kind", "enumerate")
        assert res.returncode == 0
        assert "allowable" in res.stdout and "cfo-soundness" not in res.stdout


# ---------------------------------------------------------------------------
# Exit codes
# ---------------------------------------------------------------------------


class TestExitCodes:
    def test_pass(self):
        res = run("verify", "cfo-soundness", "--M", 4, "--N", 4, "--q", 2, "--seed", 7)
        assert res.returncode == 0, res.stderr
        assert "cfo-soundness: PASS" in res.stdout

    def test_assertion_failure(self):
        # the binomial count does not hold for two pairs at n = 2
        res = run("verify", "counting", "--n", 2, "--t", 2, "--samples", 2)
        assert res.returncode == 1
        assert "FAIL" in res.stdout

    def test_usage_errors(self):
        assert run("verify", "no-such-thing").returncode == 2
        assert run("verify", "cfo-soundness", "--rounds", 3).returncode == 2
        assert run("verify", "cfo-soundness", "--bogus", 1).returncode == 2
        assert run("cromulence", "--dist", "other").returncode == 2

    def test_budget_exceeded(self):
        res = run("distinguish", "--budget", 99_999_999)
        assert res.returncode == 3
        assert "exceeds" in res.stderr


# ---------------------------------------------------------------------------
# Outputs
# ---------------------------------------------------------------------------


class TestOutputs:
    def test_csv_to_stdout(self):
        res = run("verify", "chain-census", "--n", 1, "--t", 1)
        assert res.returncode == 0
        lines = res.stdout.strip().splitlines()
        assert lines[-2] == "n,t,chains,semi2,semi1,semi0"
        assert lines[-1].startswith("1,1,")

    def test_csv_file(self, tmp_path):
        out = tmp_path / "rows.csv"
        res = run("verify", "sparsity", "--predicate", "dm-zero-preimage", "--N", 4, "--t", 1, "--csv", out)
        assert res.returncode == 0
        assert out.read_text() == "predicate,N,t,s_t\ndm-zero-preimage,4,1,1\n"

    def test_out_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for path in (a, b):
            assert run("experiment", "cp-distance", "--q", 1, "--out", path).returncode == 0
        assert a.read_bytes() == b.read_bytes()
        data = json.loads(a.read_text())
        assert data["runtime_ms"] is None
        assert data["experiment"] == "cp-distance"

    def test_timing_flag(self, tmp_path):
        out = tmp_path / "t.json"
        assert run("experiment", "cp-distance", "--q", 1, "--out", out, "--timing").returncode == 0
        assert json.loads(out.read_text())["runtime_ms"] > 0

    def test_json_stdout(self):
        res = run("distinguish", "--rounds", 3, "--json")
        assert res.returncode == 0
        assert abs(json.loads(res.stdout)["values"]["advantage"] - 1 / 12) < 1e-12


# ---------------------------------------------------------------------------
# Fixtures and configuration
# ---------------------------------------------------------------------------


class TestFixtures:
    def test_assert_matches_and_leaves_store_alone(self, tmp_path):
        copy = tmp_path / "frozen.json"
        shutil.copy(FROZEN, copy)
        before = copy.read_bytes()
        res = run("experiment", "cp-distance", "--q", 1, "--fixtures", "assert", "--fixture-file", copy)
        assert res.returncode == 0, res.stderr
        assert "matches cp-distance" in res.stderr
        assert copy.read_bytes() == before

    def test_assert_detects_drift(self, tmp_path):
        copy = tmp_path / "frozen.json"
        data = json.loads(FROZEN.read_text())
        key = "cp-distance[N=4,q=1,seed=0]:trace_distance"
        data["entries"][key]["value"] = 0.5
        copy.write_text(json.dumps(data))
        res = run("experiment", "cp-distance", "--q", 1, "--fixtures", "assert", "--fixture-file", copy)
        assert res.returncode == 1
        assert "fixture failure" in res.stderr

    def test_record_then_assert(self, tmp_path):
        store = tmp_path / "new.json"
        assert run("experiment", "cp-distance", "--q", 1, "--fixtures", "record", "--fixture-file", store).returncode == 0
        assert "cp-distance[N=4,q=1,seed=0]:trace_distance" in json.loads(store.read_text())["entries"]
        assert run("experiment", "cp-distance", "--q", 1, "--fixtures", "assert", "--fixture-file", store).returncode == 0

    def test_missing_fixture(self, tmp_path):
        res = run("experiment", "cp-distance", "--q", 1, "--fixtures", "assert", "--fixture-file", tmp_path / "none.json")
        assert res.returncode == 1


class TestConfig:
    @pytest.fixture
    def ini(self, tmp_path):
        path = tmp_path / "run.ini"
        path.write_text("[defaults]\nseed = 5\n\n[distinguish]\nrounds = 4\n")
        return path

    def test_config_supplies_defaults(self, ini):
        res = run("--config", ini, "distinguish", "--json")
        assert res.returncode == 0, res.stderr
        data = json.loads(res.stdout)
        assert data["seed"] == 5
        assert data["values"]["rounds"] == 4

    def test_flag_beats_config(self, ini):
        res = run("--config", ini, "distinguish", "--rounds", 3, "--json")
        assert json.loads(res.stdout)["values"]["rounds"] == 3
