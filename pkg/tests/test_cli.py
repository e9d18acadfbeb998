import csv
import json
import math

import pytest

from qspeed import __version__
from qspeed.cli import ExperimentConfig, cmd_fig3, cmd_table2, cmd_tomo, find_crossings, main
from qspeed.qcore import ValidationError

SINC2 = math.sin(math.pi / 6) ** 2 / (math.pi / 6) ** 2


@pytest.mark.parametrize(
    "axis, s_roots, i_roots",
    [("x", [0.7405], [0.5]), ("y", [0.2595], [0.5]), ("z", [0.1298, 0.8702], [0.1464, 0.8536])],
)
def test_table2_crossings(axis, s_roots, i_roots):
    rep = cmd_table2(ExperimentConfig(axis=axis))
    c = rep["crossings"]
    assert c["S"] == pytest.approx(s_roots, abs=1e-4)
    assert c["I_F"] == pytest.approx(i_roots, abs=1e-4)
    # closed-form oracles for the roots
    root = math.sqrt(0.5 / SINC2)
    oracle = {"x": [root], "y": [1 - root], "z": [(1 - root) / 2, (1 + root) / 2]}[axis]
    assert c["S"] == pytest.approx(oracle, abs=1e-5)


def test_table2_rows_and_regions():
    rep = cmd_table2(ExperimentConfig(axis="z"))
    assert rep["crossings"]["S_region"] == "p<0.1298 or p>0.8702"
    rows = rep["rows"]
    assert [r["p"] for r in rows] == pytest.approx([k / 10 for k in range(11)])
    for r in rows:
        assert r["I_F"] == pytest.approx((1 - 2 * r["p"]) ** 2, abs=1e-10)
        assert r["witness_verdict"] == (r["S_exact"] > 0.5)


def test_find_crossings_handles_exact_grid_roots():
    assert find_crossings(lambda p: p - 0.5) == pytest.approx([0.5])
    assert find_crossings(lambda p: 1.0) == []


def test_fig3_exact_curves():
    rep = cmd_fig3(ExperimentConfig(axis="x", shots="exact", p_grid=(0.5, 1.0)))
    last = rep["rows"][-1]
    assert last["S_exact"] == pytest.approx(0.91189, abs=1e-5)
    assert last["S_estimated"] == pytest.approx(last["S_exact"], abs=1e-12)
    assert last["S_fixture"] < 0.91189
    assert rep["witness_threshold_line"] == 0.5
    rep_z = cmd_fig3(ExperimentConfig(axis="z", shots="exact", p_grid=(0.5,)))
    assert rep_z["rows"][0]["S_exact"] == pytest.approx(0, abs=1e-14)


def test_fig3_parallel_grid_matches_serial():
    base = dict(axis="y", shots=10**4, mc_samples=50, p_grid=(0.1, 0.4, 0.9), seed=3)
    a = cmd_fig3(ExperimentConfig(**base))
    b = cmd_fig3(ExperimentConfig(**base, workers=3))
    assert a["rows"] == b["rows"]


def test_tomo_report():
    rep = cmd_tomo(ExperimentConfig())
    fid = rep["state_fidelity"]
    assert fid["phi_plus_1"]["fidelity"] == pytest.approx(0.9889, abs=1e-4)
    assert fid["phi_plus_2"]["fidelity"] == pytest.approx(0.9279, abs=1e-4)
    for det in rep["mle_self_consistency"]["detectors"].values():
        assert det["max_trace_distance"] <= 1e-3
    for st in rep["mle_self_consistency"]["states"].values():
        assert st["trace_distance"] <= 1e-3


def test_config_validation():
    with pytest.raises(ValidationError):
        ExperimentConfig(p_grid=(0.2, 1.2))
    with pytest.raises(ValidationError):
        ExperimentConfig(mc_samples=0)
    with pytest.raises(ValidationError):
        ExperimentConfig(shots="many")
    with pytest.raises(ValidationError):
        ExperimentConfig.from_mapping({"bogus": 1})
    cfg = ExperimentConfig.from_mapping({"axis": "z", "noise": {"visibility": 0.9}})
    assert cfg.visibility == 0.9 and cfg.to_json()["noise"]["visibility"] == 0.9


def _run_fig3(tmp_path, name, extra=()):
    out = tmp_path / name
    code = main(["fig3", "--axis", "z", "--shots", "20000", "--mc-samples", "100", "--seed", "42",
                 "--output-dir", str(out), *extra])
    assert code == 0
    return out


def test_cli_outputs_are_byte_identical(tmp_path, capsys):
    a = _run_fig3(tmp_path, "run")
    first = {p.name: p.read_bytes() for p in a.iterdir()}
    a = _run_fig3(tmp_path, "run")
    second = {p.name: p.read_bytes() for p in a.iterdir()}
    assert first == second and set(first) == {"fig3_z.json", "fig3_z.csv"}


def test_cli_report_embeds_config_and_version(tmp_path, capsys):
    out = _run_fig3(tmp_path, "emb")
    rep = json.loads((out / "fig3_z.json").read_text())
    assert rep["version"] == __version__
    assert rep["config"]["seed"] == 42 and rep["config"]["shots"] == 20000
    with open(out / "fig3_z.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 11
    assert set(rows[0]) >= {"p", "S_exact", "S_estimated", "error_bar", "I_F", "witness_verdict", "threshold_crossings"}


def test_cli_toml_and_override(tmp_path, capsys):
    cfg = tmp_path / "run.toml"
    cfg.write_text('axis = "y"\nshots = "exact"\np_grid = [0.0, 1.0]\n[noise]\nvisibility = 0.95\n')
    out = tmp_path / "o"
    code = main(["fig3", "--config", str(cfg), "--override", '{"p_grid": [0.25]}', "--output-dir", str(out)])
    assert code == 0
    rep = json.loads((out / "fig3_y.json").read_text())
    assert rep["config"]["p_grid"] == [0.25]
    assert rep["config"]["noise"]["visibility"] == 0.95
    assert rep["config"]["shots"] == "exact"


def test_cli_validation_errors_exit_2(tmp_path, capsys):
    assert main(["fig3", "--p-grid", "1.5", "--no-write"]) == 2
    assert "p_grid" in capsys.readouterr().err
    assert main(["table2", "--override", "[1]", "--no-write"]) == 2
    bad = tmp_path / "bad.toml"
    bad.write_text("axis = ")
    assert main(["table2", "--config", str(bad), "--no-write"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["table2", "--axis", "w"])
    assert exc.value.code == 2


def test_cli_missing_fixture_dir(tmp_path, capsys):
    assert main(["tomo", "--fixtures", str(tmp_path / "nope"), "--no-write"]) == 1


def test_cli_tomo_with_explicit_fixture_dir(capsys):
    from qspeed.fixtures import fixture_dir

    assert main(["tomo", "--fixtures", str(fixture_dir()), "--no-write"]) == 0
    assert "phi_plus_1: fidelity 0.9889" in capsys.readouterr().out


def test_cli_table2_prints_regions(capsys):
    assert main(["table2", "--axis", "x", "--tau", "0.5235987755982988", "--no-write"]) == 0
    assert "p>0.7405" in capsys.readouterr().out


def test_cli_decompose(capsys):
    assert main(["decompose", "--xi", "0", "--eta", "0", "--zeta", "0"]) == 0
    out = capsys.readouterr().out
    assert "theta2=135.000000" in out and "theta2=2.3561944902" in out and "True" in out
    assert main(["decompose", "--xi", "1", "--eta", "2", "--zeta", "3", "--json"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["round_trip"] is True and len(rep["reference_gates"]) == 12
