# SPDX-License-Identifier: Apache-2.0
"""End-to-end checks of the rblock command line: output schemas, exit codes, determinism."""

import json
import os
import subprocess
from pathlib import Path

import jsonschema
import pytest

ROOT = Path(__file__).resolve().parents[2]
CLI = os.environ.get("RBLOCK_CLI", str(ROOT / "build" / "tools" / "rblock"))
SCHEMAS = Path(os.environ.get("RBLOCK_SCHEMAS", str(ROOT / "docs" / "schemas")))

TINY = {
    "epochs": 2,
    "batch_size": 8,
    "seed": 3,
    "optimizer": {"lr": 0.01},
    "lr_milestones": [],
    "model_widths": [4, 6, 8],
    "drop": {"method": "bdropdml", "p": 0.2},
    "dataset": {"kind": "synthetic", "per_class": 8, "test_per_class": 4, "height": 8, "width": 8},
}


def run(*args):
    return subprocess.run([CLI, *map(str, args)], capture_output=True, text=True, timeout=600)


def schema(name):
    return json.loads((SCHEMAS / f"{name}.schema.json").read_text())


def check(instance, name):
    jsonschema.Draft202012Validator(schema(name)).validate(instance)


@pytest.fixture
def tiny(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(TINY))
    return path


def test_schemas_are_valid():
    for path in SCHEMAS.glob("*.schema.json"):
        jsonschema.Draft202012Validator.check_schema(json.loads(path.read_text()))


@pytest.mark.parametrize(
    "args",
    [
        ["--p", "0.2"],
        ["--p", "0.1", "--bsize", "5", "--m", "32", "--n", "32", "--mode", "corrected"],
        ["--p", "0.5", "--m", "32", "--n", "32", "--mode", "exact", "--tol", "1e-10"],
    ],
)
def test_gamma_json(args):
    r = run("gamma", *args, "--json")
    assert r.returncode == 0, r.stderr
    out = json.loads(r.stdout)
    check(out, "gamma")
    if out["mode"] == "exact":
        assert out["p2"] <= 0.5 <= out["p1"]
        assert out["residual"] <= 1e-10


def test_gamma_simple_value():
    out = json.loads(run("gamma", "--p", "0.2", "--json").stdout)
    assert out["gamma"] == pytest.approx(0.2 / 9, abs=1e-15)


@pytest.mark.parametrize("method", ["dropout", "spatial_dropout", "dropblock", "rdrop", "bdropdml", "sdropdml"])
def test_mask_sample_file(tmp_path, method):
    out = tmp_path / "mask.json"
    r = run("mask", "sample", "--method", method, "--p", "0.3", "--m", "8", "--n", "8", "--c", "4",
            "--seed", "11", "--out", out)
    assert r.returncode == 0, r.stderr
    doc = json.loads(out.read_text())
    check(doc, "mask")
    assert doc["shape"] == [8, 8, 4]
    assert len(doc["keep1"]) == 256
    assert (doc["keep2"] is None) == (method in {"dropout", "spatial_dropout", "dropblock"})


def test_mask_sample_is_deterministic(tmp_path):
    a, b, c = (tmp_path / f"{x}.json" for x in "abc")
    common = ["mask", "sample", "--method", "sdropdml", "--p", "0.4", "--m", "12", "--n", "12", "--c", "6"]
    assert run(*common, "--seed", "7", "--out", a).returncode == 0
    assert run(*common, "--seed", "7", "--out", b).returncode == 0
    assert run(*common, "--seed", "8", "--out", c).returncode == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()


def test_mask_json_stdout_matches_file(tmp_path):
    out = tmp_path / "mask.json"
    common = ["mask", "sample", "--method", "bdropdml", "--p", "0.2", "--m", "9", "--n", "9", "--c", "3",
              "--seed", "2"]
    r = run(*common, "--json")
    assert r.returncode == 0
    assert run(*common, "--out", out).returncode == 0
    assert json.loads(r.stdout) == json.loads(out.read_text())


@pytest.mark.parametrize(
    "args",
    [
        ["--gamma", "0.05", "--trials", "4000"],
        ["--gamma", "0.05", "--m", "5", "--n", "5", "--trials", "2000"],
        ["--gamma", "0.02", "--center-region", "valid", "--trials", "2000"],
        ["--method", "bdropdml", "--p", "0.2", "--m", "16", "--n", "16", "--c", "4", "--trials", "2000"],
        ["--method", "dropout", "--p", "0.3", "--m", "8", "--n", "8", "--c", "2", "--trials", "2000"],
    ],
)
def test_verify_json(args):
    r = run("verify", *args, "--json")
    assert r.returncode == 0, r.stderr
    check(json.loads(r.stdout), "verify")


def test_verify_below_precondition_reports_null():
    out = json.loads(run("verify", "--gamma", "0.05", "--m", "5", "--n", "5", "--trials", "2000", "--json").stdout)
    assert out["analytic_p"] is None
    assert out["pass"] is None


def test_train_outputs(tmp_path, tiny):
    r = run("train", "--config", tiny, "--out", tmp_path / "run", "--json")
    assert r.returncode == 0, r.stderr
    summary = json.loads(r.stdout)
    check(summary, "train")
    manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
    check(manifest, "train")
    assert manifest["status"] == "completed"
    assert manifest["epochs_completed"] == 2
    blob = tiny.read_bytes()
    expected = subprocess.run(["git", "hash-object", "--stdin"], input=blob, capture_output=True).stdout.decode()
    if expected:
        assert manifest["inputs"]["config"]["git_sha1"] == expected.strip()
    for name in ("metrics.csv", "final.rblk", "best.rblk", "last_good.rblk"):
        assert (tmp_path / "run" / name).exists()


def test_train_is_deterministic(tmp_path, tiny):
    for d in ("a", "b"):
        assert run("train", "--config", tiny, "--out", tmp_path / d).returncode == 0
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()
    assert (tmp_path / "a" / "final.rblk").read_bytes() == (tmp_path / "b" / "final.rblk").read_bytes()
    assert run("train", "--config", tiny, "--out", tmp_path / "c", "--seed", "9").returncode == 0
    assert (tmp_path / "a" / "metrics.csv").read_bytes() != (tmp_path / "c" / "metrics.csv").read_bytes()


def test_compare_outputs(tmp_path, tiny):
    r = run("compare", "--config", tiny, "--methods", "bdropdml,rdropblock:0.1", "--out", tmp_path / "cmp", "--json")
    assert r.returncode == 0, r.stderr
    summary = json.loads(r.stdout)
    assert summary["command"] == "compare"
    assert len(summary["table"]) == 2
    manifest = json.loads((tmp_path / "cmp" / "manifest.json").read_text())
    check(manifest, "compare")
    lines = (tmp_path / "cmp" / "stages.csv").read_text().splitlines()
    assert lines[0] == "method,p,stage20,stage40,stage60,stage80,stage100"
    assert len(lines) == 3


# Exit codes: 1 usage, 2 data/format, 3 numerical.

def test_exit_usage():
    assert run().returncode == 1
    assert run("nosuchcommand").returncode == 1
    assert run("gamma").returncode == 1
    assert run("gamma", "--p", "0.2", "--bsize", "4").returncode == 1
    assert run("gamma", "--p", "1.5").returncode == 1
    assert run("gamma", "--p", "0.2", "--mode", "corrected").returncode == 1
    assert run("mask", "sample", "--method", "warp", "--p", "0.2").returncode == 1
    assert run("verify").returncode == 1
    assert run("verify", "--gamma", "0.1", "--method", "dropout", "--p", "0.2").returncode == 1
    assert run("verify", "--gamma", "0.1", "--trials", "10").returncode == 1


def test_exit_missing_config(tmp_path):
    r = run("train", "--config", tmp_path / "absent.json", "--out", tmp_path / "o")
    assert r.returncode == 1
    assert r.stderr


def test_exit_data_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    assert run("train", "--config", bad, "--out", tmp_path / "o1").returncode == 2
    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps({**TINY, "mystery": 1}))
    r = run("train", "--config", unknown, "--out", tmp_path / "o2")
    assert r.returncode == 2
    assert "mystery" in r.stderr


def test_exit_numerical(tmp_path):
    assert run("gamma", "--p", "0.2", "--m", "6", "--n", "6", "--mode", "exact").returncode == 3
    hot = tmp_path / "hot.json"
    hot.write_text(json.dumps({**TINY, "optimizer": {"lr": 1e6}}))
    r = run("train", "--config", hot, "--out", tmp_path / "div")
    assert r.returncode == 3
    manifest = json.loads((tmp_path / "div" / "manifest.json").read_text())
    check(manifest, "train")
    assert manifest["status"] == "failed"
