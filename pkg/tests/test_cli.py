import csv
import io
import json
import math

import numpy as np
import pytest

from rdrisk.cli import main


@pytest.fixture(scope="module")
def fuzzy_csv(tmp_path_factory):
    rng = np.random.default_rng(9)
    lines = ["x,t,y"]
    for _ in range(3000):
        x = float(np.clip(rng.normal(0.2, 0.06), 0.01, 0.6))
        t = int(rng.random() < (0.15 + 0.7 * (x >= 0.2)))
        y = int(rng.random() < (0.08 + 0.1 * t))
        lines.append(f"{x},{t},{y}")
    path = tmp_path_factory.mktemp("data") / "fuzzy.csv"
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture(scope="module")
def sharp_csv(tmp_path_factory):
    rng = np.random.default_rng(3)
    lines = ["x,t,y"]
    for _ in range(2000):
        x = float(np.clip(rng.normal(0.2, 0.05), 0.01, 0.5))
        t = int(x >= 0.2)
        y = int(rng.random() < (0.1 + 0.2 * t))
        lines.append(f"{x},{t},{y}")
    path = tmp_path_factory.mktemp("data") / "sharp.csv"
    path.write_text("\n".join(lines) + "\n")
    return path


def run_to_file(tmp_path, args, name="out.json"):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, out


def test_estimate_gmm_single_cell(fuzzy_csv, tmp_path):
    code, out = run_to_file(
        tmp_path,
        ["estimate", "--input", str(fuzzy_csv), "--models", "gmm",
         "--bandwidths", "0.1", "--seed", "3", "--bootstrap", "400"],
    )
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["config"]["seed"] == 3
    (cell,) = doc["results"]
    assert cell["status"] == "ok"
    assert cell["estimator"] == "gmm"
    assert cell["l95"] <= cell["mean"] <= cell["u95"]
    assert cell["n1"] > 0 and cell["n0"] > 0


def test_estimate_full_grid_shape(fuzzy_csv, tmp_path):
    code, out = run_to_file(
        tmp_path,
        ["estimate", "--input", str(fuzzy_csv),
         "--bandwidths", "0.025", "0.05", "0.075", "0.1",
         "--burnin", "200", "--iters", "400", "--retain", "200",
         "--bootstrap", "200", "--seed", "1"],
    )
    assert code == 0
    doc = json.loads(out.read_text())
    results = doc["results"]
    # four bandwidths x (three model variants + gmm), mirroring the
    # published table layout
    assert len(results) == 16
    assert [r["bandwidth"] for r in results] == sorted(
        [0.025, 0.05, 0.075, 0.1] * 4
    )
    tags = {r["estimator"] for r in results}
    assert tags == {"gmm", "pois.flex", "pois.pois", "pois.prod.flex"}
    assert len(doc["diagnostics"]["windows"]) == 4


def test_estimate_empty_arm_reported_not_fatal(tmp_path):
    path = tmp_path / "above.csv"
    lines = ["x,t,y"] + [f"0.{25 + i % 5},1,{i % 2}" for i in range(40)]
    path.write_text("\n".join(lines) + "\n")
    code, out = run_to_file(
        tmp_path, ["estimate", "--input", str(path), "--models", "gmm",
                   "--bandwidths", "0.05", "0.1"],
    )
    assert code == 0
    doc = json.loads(out.read_text())
    assert all(r["status"] == "unavailable: empty arm" for r in doc["results"])


def test_unknown_model_exits_one_and_lists_tags(fuzzy_csv, capsys):
    code = main(["estimate", "--input", str(fuzzy_csv), "--models", "wald"])
    assert code == 1
    err = capsys.readouterr().err
    assert "pois.flex" in err and "gmm" in err


def test_zero_replications_is_config_error(capsys):
    code = main(["simulate", "--replications", "0", "--models", "gmm"])
    assert code == 1
    assert "replications" in capsys.readouterr().err


def test_missing_input_exits_one(tmp_path, capsys):
    code = main(["estimate", "--input", str(tmp_path / "nope.csv"), "--models", "gmm"])
    assert code == 1


def test_byte_identical_reruns(fuzzy_csv, tmp_path):
    out = tmp_path / "same.json"
    args = ["estimate", "--input", str(fuzzy_csv), "--models", "gmm",
            "--bandwidths", "0.1", "--seed", "3", "--bootstrap", "300",
            "--out", str(out)]
    assert main(args) == 0
    first = out.read_bytes()
    assert main(args) == 0
    assert out.read_bytes() == first


def test_json_round_trip_is_exact(fuzzy_csv, tmp_path):
    code, out = run_to_file(
        tmp_path, ["estimate", "--input", str(fuzzy_csv), "--models", "gmm",
                   "--bandwidths", "0.05", "--seed", "7", "--bootstrap", "300"],
    )
    text = out.read_text()
    reloaded = json.dumps(json.loads(text), indent=2, sort_keys=True) + "\n"
    assert reloaded == text


def test_simulate_small_run(tmp_path):
    code, out = run_to_file(
        tmp_path,
        ["simulate", "--iv", "strong", "--confounding", "low", "--effect", "none",
         "--models", "gmm", "--replications", "2", "--n", "2000",
         "--bandwidths", "0.1", "--bootstrap", "150", "--seed", "4"],
    )
    assert code == 0
    doc = json.loads(out.read_text())
    (cell,) = doc["results"]
    assert cell["scenario"] == "strong/low/none"
    assert cell["true_rr"] == 1.0
    assert cell["n_reps"] == 2


def test_simulate_scenario_file(tmp_path):
    scenarios = [
        {"instrument": "weak", "confounding": "low", "effect": "none"},
        {"instrument": "strong", "confounding": "low", "effect": "none"},
    ]
    sc_path = tmp_path / "scenarios.json"
    sc_path.write_text(json.dumps(scenarios))
    code, out = run_to_file(
        tmp_path,
        ["simulate", "--scenario-file", str(sc_path), "--models", "gmm",
         "--replications", "1", "--n", "1500", "--bandwidths", "0.1",
         "--bootstrap", "100"],
    )
    assert code == 0
    doc = json.loads(out.read_text())
    assert {c["scenario"] for c in doc["results"]} == {
        "weak/low/none", "strong/low/none"
    }


def test_simulate_csv_format(tmp_path):
    code, out = run_to_file(
        tmp_path,
        ["simulate", "--iv", "weak", "--confounding", "low", "--effect", "none",
         "--models", "gmm", "--replications", "1", "--n", "1500",
         "--bandwidths", "0.1", "--bootstrap", "100", "--format", "csv"],
        name="sim.csv",
    )
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# config:")
    rows = list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))
    assert rows[0]["scenario"] == "weak/low/none"


def test_diagnose_blocks_per_bandwidth(fuzzy_csv, tmp_path):
    code, out = run_to_file(
        tmp_path, ["diagnose", "--input", str(fuzzy_csv),
                   "--bandwidths", "0.05", "0.1"],
    )
    assert code == 0
    doc = json.loads(out.read_text())
    assert len(doc["diagnostics"]) == 2
    for block in doc["diagnostics"]:
        assert block["f_test"]["p"] < 0.05
        assert block["bounds"]["lower"] <= block["bounds"]["upper"]


def test_diagnose_sharp_design_infinite_f(sharp_csv, tmp_path):
    code, out = run_to_file(
        tmp_path, ["diagnose", "--input", str(sharp_csv), "--bandwidths", "0.1"],
    )
    assert code == 0
    doc = json.loads(out.read_text())  # json reads the Infinity sentinel back
    block = doc["diagnostics"][0]
    assert math.isinf(block["f_test"]["f"])
    assert block["f_test"]["p"] == 0.0
    assert block["bounds"]["width"] == pytest.approx(0.0, abs=1e-12)


def test_explore_json_and_csv(fuzzy_csv, tmp_path):
    code, out = run_to_file(tmp_path, ["explore", "--input", str(fuzzy_csv)])
    assert code == 0
    doc = json.loads(out.read_text())
    assert len(doc["bins"]) == 20
    assert doc["splines"]["above"] is not None

    code, out_csv = run_to_file(
        tmp_path, ["explore", "--input", str(fuzzy_csv), "--format", "csv"],
        name="explore.csv",
    )
    assert code == 0
    lines = out_csv.read_text().splitlines()
    assert lines[1].split(",")[:4] == ["bin_mid", "mean_t", "mean_y", "n"]
    assert lines[-1].startswith("# splines:")


def test_column_remap(tmp_path):
    path = tmp_path / "renamed.csv"
    rows = ["score,rx,goal"] + [
        f"0.{15 + i % 10},{i % 2},{(i + 1) % 2}" for i in range(60)
    ]
    path.write_text("\n".join(rows) + "\n")
    code, out = run_to_file(
        tmp_path,
        ["estimate", "--input", str(path), "--col-x", "score", "--col-t", "rx",
         "--col-y", "goal", "--models", "gmm", "--bandwidths", "0.1",
         "--bootstrap", "100"],
    )
    assert code == 0
