import json
import subprocess
import sys

import pytest

from stircp.cli import main


def _run(args, capsys):
    code = main(args)
    out = capsys.readouterr().out
    return code, out


def test_scales_surv_row(capsys):
    code, out = _run(
        ["scales", "--mode", "surv", "--v", "65536", "--eps0", "1/32", "--h0", "1", "--N", "3", "--alpha-override", "4"],
        capsys,
    )
    assert code == 0
    doc = json.loads(out)
    rows = doc["results"]["rows"]
    assert [r["rho"] for r in rows] == ["1", "3/2", "7/4", "15/8"]
    assert doc["results"]["alpha"] == 4


def test_scales_desk_v_is_degenerate(capsys):
    # the growth constant floors to 1 for any desk-size v: flagged, not hidden
    code, out = _run(
        ["scales", "--mode", "surv", "--v", "65536", "--eps0", "1/32", "--h0", "1", "--N", "1"],
        capsys,
    )
    assert code == 0
    doc = json.loads(out)
    assert doc["results"]["alpha"] == 1
    assert doc["results"]["degenerate"] is True


def test_scales_ext(capsys):
    code, out = _run(["scales", "--mode", "ext", "--v", "100", "--d", "1", "--N", "2"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["results"][1]["L"] / doc["results"][0]["L"] == pytest.approx(128.0)


def test_survival_subcommand(capsys):
    code, out = _run(
        ["survival", "--n", "32", "--lam", "0", "--v", "1", "--p", "0.5", "--horizon", "2", "--replicas", "500", "--seed", "3"],
        capsys,
    )
    assert code == 0
    doc = json.loads(out)
    assert 0.0 <= doc["results"]["mean"] <= 1.0
    assert doc["schema_version"] == 1
    assert doc["config"]["lam"] == 0.0


def test_simulate_deterministic(tmp_path, capsys):
    out1 = tmp_path / "a.jsonl"
    out2 = tmp_path / "b.jsonl"
    for path in (out1, out2):
        code = main(
            ["simulate", "--n", "16", "--lam", "1", "--v", "1", "--p", "0.5", "--horizon", "1", "--seed", "7", "--out", str(path)]
        )
        assert code == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_meet_subcommand(capsys):
    code, out = _run(["meet", "--ell", "1", "--replicas", "300", "--seed", "2"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["results"]["mean"] > 0


def test_index_ranges_subcommand(capsys):
    code, out = _run(
        ["index-ranges", "--alpha-override", "10", "--N", "1", "--m", "0", "--n-idx", "0"],
        capsys,
    )
    assert code == 0
    doc = json.loads(out)
    assert doc["results"]["l"] == -14 and doc["results"]["r"] == 14
    assert doc["results"]["bruteforce_agrees"] is True


def test_brw_extinction_subcommand(capsys):
    code, out = _run(
        ["brw-extinction", "--beta", "2", "--n0", "1", "--horizon", "20", "--replicas", "2000", "--seed", "5", "--cap", "256"],
        capsys,
    )
    assert code == 0
    doc = json.loads(out)
    assert abs(doc["results"]["mean"] - 0.5) < 0.05
    assert doc["results"]["analytic_extinction"] == 0.5


def test_csv_format_and_header_only(tmp_path):
    out = tmp_path / "table.csv"
    code = main(
        ["survival", "--n", "32", "--lam", "0", "--v", "1", "--p", "0.5", "--horizon", "1", "--replicas", "200", "--seed", "1", "--format", "csv", "--out", str(out)]
    )
    assert code == 0
    text = out.read_text()
    lines = text.strip().splitlines()
    assert lines[0].startswith("# schema_version=")
    assert "mean" in lines[2]


def test_config_file_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("n=32\nlam=0.0\nhorizon=2.0\nreplicas=300\nseed=4\n")
    code, out = _run(["survival", "--config", str(cfg), "--replicas", "200"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["config"]["n"] == 32  # from file
    assert doc["config"]["replicas"] == 200  # flag wins


def test_usage_exit_code():
    proc = subprocess.run(
        [sys.executable, "-m", "stircp.cli", "no-such-command"],
        capture_output=True,
    )
    assert proc.returncode == 64


def test_domain_error_exit_code(capsys):
    code = main(["survival", "--n", "32", "--replicas", "10"])
    assert code == 2


def test_range_error_exit_code(capsys):
    code = main(
        ["scan-lambda", "--n", "32", "--v", "1", "--p", "0.5", "--lam-lo", "0.1", "--lam-hi", "0.2", "--theta-star", "0.9", "--horizon", "5", "--replicas", "200", "--seed", "1"]
    )
    assert code == 2


def test_json_roundtrip_equals_memory(capsys):
    code, out = _run(
        ["meet", "--ell", "1", "--replicas", "200", "--seed", "9"], capsys
    )
    doc = json.loads(out)
    assert json.loads(json.dumps(doc, sort_keys=True, indent=2)) == doc


def test_couple_ip_subcommand(capsys):
    code, out = _run(
        ["couple-ip", "--n", "64", "--ell", "2", "--L", "12", "--t", "8", "--T", "16", "--p-lo", "0.2", "--p-hi", "0.8", "--replicas", "50", "--seed", "3"],
        capsys,
    )
    assert code == 0
    doc = json.loads(out)
    assert doc["results"]["domination_violations"] == 0


def test_half_cross_subcommand(capsys):
    code, out = _run(
        ["half-cross", "--n", "16", "--lam", "1", "--v", "1", "--p", "0.8", "--radius", "3", "--height", "1.5", "--seed", "2"],
        capsys,
    )
    assert code == 0
    doc = json.loads(out)
    assert doc["results"]["crossing"] in ("none", "temporal", "spatial")


@pytest.mark.parametrize(
    "args",
    [
        ["g-estimate", "--n", "32", "--ell", "2", "--L", "8", "--t", "1", "--p", "0.9", "--direction", "up", "--replicas", "60", "--seed", "1"],
        ["containment", "--n", "24", "--lam", "1", "--v", "2", "--horizon", "1", "--seed", "2"],
        ["kappa", "--n", "24", "--lam", "1", "--v", "2", "--t", "1", "--seed", "3"],
        ["collisions", "--n", "24", "--lam", "1", "--v", "2", "--h", "1", "--seed", "4"],
        ["brw", "--n", "16", "--beta", "1.5", "--v", "1", "--horizon", "1", "--walkers", "2", "--seed", "5"],
        ["couple-brw", "--n", "64", "--lam", "1", "--v", "8", "--p", "0.5", "--h0", "0.5", "--a-count", "2", "--replicas", "20", "--seed", "6"],
        ["accessible", "--alpha", "16", "--m-half", "40", "--rows", "30", "--p-bad", "0.1", "--N", "1", "--seed", "7"],
        ["spread-check", "--alpha", "16", "--m-half", "40", "--rows", "30", "--p-bad", "0.05", "--N", "1", "--seed", "8"],
        ["classify", "--n", "48", "--lam", "1.5", "--v", "8", "--p", "0.6", "--h0", "0.5", "--epochs", "1", "--m-range", "0", "--g-budget", "25", "--seed", "9"],
        ["scan-lambda", "--n", "64", "--v", "1", "--p", "0.5", "--lam-lo", "0.3", "--lam-hi", "5", "--theta-star", "0.2", "--horizon", "6", "--replicas", "400", "--seed", "10"],
        ["trend", "--n", "64", "--p", "0.5", "--v-list", "1,4", "--theta-star", "0.2", "--horizon", "6", "--replicas", "400", "--seed", "11"],
    ],
)
def test_every_subcommand_emits_valid_json(args, capsys):
    code, out = _run(args, capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["schema_version"] == 1
