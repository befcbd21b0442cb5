import csv
import json
from pathlib import Path

import pytest

from sdta.cli import main


def run(*argv) -> int:
    return main(list(argv))


def rows_of(path: Path) -> list[dict]:
    with path.open() as fh:
        return list(csv.DictReader(fh))


def test_validate_fixture_network(capsys, tmp_path):
    assert run("validate", "twolinks") == 0
    report = json.loads(capsys.readouterr().out)
    assert report["network"] == "ok"
    assert report["links"] == 2


def test_validate_with_scenario(capsys):
    assert run("validate", "diamond", "diamond") == 0
    report = json.loads(capsys.readouterr().out)
    assert report["network"] == "ok"
    assert report["scenario"] == "ok"


def test_missing_file_is_exit_2(tmp_path):
    assert run("validate", str(tmp_path / "nope.yaml")) == 2


def test_malformed_yaml_is_exit_2(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("nodes: [1, 2\n")
    assert run("validate", str(bad)) == 2


def test_invalid_network_is_exit_3(tmp_path, capsys):
    doc = tmp_path / "net.yaml"
    doc.write_text(
        "nodes: [1, 2, 3]\norigin: 1\ndestination: 3\nlinks:\n"
        "  - {id: a, from: 1, to: 2, length_m: 100, vf_mps: 10, w_mps: 5, kjam_veh_per_m: 0.2}\n"
        "  - {id: b, from: 3, to: 2, length_m: 100, vf_mps: 10, w_mps: 5, kjam_veh_per_m: 0.2}\n"
    )
    assert run("validate", str(doc)) == 3


def test_solve_writes_result_tables(tmp_path):
    out = tmp_path / "run"
    code = run(
        "solve", "twolinks", "twolinks",
        "--steps", "100", "--iters", "3", "--out", str(out),
    )
    assert code == 0
    for name in (
        "splits.csv", "travel_times.csv", "trace.csv",
        "summary.json", "manifest.json",
    ):
        assert (out / name).exists(), name
    summary = json.loads((out / "summary.json").read_text())
    assert summary["iterations"] <= 3
    assert "average_expected_time_s" in summary
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "solve"
    assert "sha256" in manifest["inputs"]["network"]
    assert "timing_s" in manifest


def test_solve_rerun_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run(
            "solve", "twolinks", "twolinks",
            "--steps", "80", "--iters", "2", "--out", str(out),
        ) == 0
    for name in ("splits.csv", "travel_times.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    # the trace carries wall-clock timings in its last column; the rest
    # must still match exactly
    rows_a = [list(r.values())[:-1] for r in rows_of(a / "trace.csv")]
    rows_b = [list(r.values())[:-1] for r in rows_of(b / "trace.csv")]
    assert rows_a and rows_a == rows_b


def test_solve_single_policy_splits_are_one(tmp_path):
    out = tmp_path / "single"
    assert run(
        "solve", "twolinks", "twolinks",
        "--steps", "60", "--iters", "2", "--policies", "1", "--out", str(out),
    ) == 0
    rows = rows_of(out / "splits.csv")
    assert rows and all(float(r["eta"]) == 1.0 for r in rows)
    assert {r["policy"] for r in rows} == {"optimal"}


def test_policies_count_must_match_z(tmp_path):
    code = run(
        "solve", "twolinks", "twolinks",
        "--steps", "60", "--policies", "3", "--z", "1.5",
        "--out", str(tmp_path / "x"),
    )
    assert code == 3


def test_load_reports_counters(tmp_path, capsys):
    out = tmp_path / "load"
    assert run(
        "load", "twolinks", "twolinks",
        "--steps", "100", "--out", str(out),
    ) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["time_loops"] >= 3
    assert (out / "travel_times.csv").exists()


def test_policies_command_dumps_decision_table(tmp_path):
    out = tmp_path / "pol"
    assert run("policies", "parallel3", "--out", str(out)) == 0
    rows = rows_of(out / "policies.csv")
    assert rows
    origin_rows = [
        r for r in rows
        if r["policy"] == "optimal" and r["node"] == "1" and r["t"] == "1"
    ]
    assert origin_rows and float(origin_rows[0]["expected_s"]) == 5.5


def test_sweep_over_perturbation_factors(tmp_path):
    out = tmp_path / "sweep"
    assert run(
        "sweep", "twolinks", "twolinks",
        "--steps", "60", "--iters", "2",
        "--z-values", "1.5", "2.0", "--out", str(out),
    ) == 0
    rows = rows_of(out / "sweep.csv")
    zs = {r["z"] for r in rows}
    assert zs == {"1.5", "2"}


def test_unknown_fixture_name_is_exit_2():
    assert run("validate", "not-a-fixture") == 2
