from __future__ import annotations

import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from merodyn import cli
from merodyn import reproduce as rp
from merodyn.scenario import SCHEMA, RunConfig, ScenarioParseError, builtin_names, from_dict, load, loads

ROOT = Path(__file__).resolve().parents[1]


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


# ----------------------------------------------------------------- scenarios


def test_shipped_schema_matches_code():
    shipped = json.loads((ROOT / "schemas" / "scenario.schema.json").read_text())
    assert shipped == json.loads(json.dumps(SCHEMA))


@pytest.mark.parametrize("name", builtin_names())
def test_bundled_scenarios_round_trip(name):
    sc = load(name)
    again = loads(sc.dumps())
    assert again == sc
    assert again.dumps() == sc.dumps()


def test_unknown_key_rejected_with_position():
    text = '{\n  "schema": 1,\n  "name": "x",\n  "colour": "blue"\n}\n'
    with pytest.raises(ScenarioParseError) as info:
        loads(text)
    assert "colour" in str(info.value)
    assert info.value.line == 4


def test_unknown_nested_key_rejected():
    with pytest.raises(ScenarioParseError):
        from_dict({"schema": 1, "name": "x", "region": {"kind": "polydisc", "center": [0], "radii": [1], "shape": 2}})


def test_malformed_json_reports_line():
    with pytest.raises(ScenarioParseError) as info:
        loads('{"schema": 1,\n "name": }')
    assert info.value.line == 2


def test_bad_expression_is_parse_error():
    with pytest.raises(ScenarioParseError):
        from_dict({"schema": 1, "name": "x",
                   "map": {"components": ["z1 +", "1"], "source": {"kind": "affine", "dim": 2}}})


def test_wrong_schema_version():
    with pytest.raises(ScenarioParseError):
        from_dict({"schema": 2, "name": "x"})


def test_settings_overrides():
    sc = from_dict({"schema": 1, "name": "x", "settings": {"tol": 0.05, "metric": {"target_scale": 2}}})
    st = RunConfig(seed=4, samples=123).settings(sc)
    assert (st.tol, st.seed, st.samples, st.metric.target_scale) == (0.05, 4, 123, 2)


def test_default_workers(monkeypatch):
    monkeypatch.setenv("MEROMAP_WORKERS", "3")
    assert RunConfig.default_workers() == 3
    monkeypatch.setenv("MEROMAP_WORKERS", "many")
    assert RunConfig.default_workers() == 1


# ----------------------------------------------------------------------- CLI


def test_iterate_cremona(capsys):
    code, out, _ = run_cli(capsys, "iterate", "--map", "cremona", "-k", "2")
    rep = json.loads(out)
    assert code == 0 and rep["is_identity"] and rep["degree_trace"] == [2, 1]


def test_indet_cremona(capsys):
    code, out, _ = run_cli(capsys, "indet", "--map", "cremona")
    rep = json.loads(out)
    assert code == 0 and rep["exact"] and len(rep["points"]) == 3
    assert sorted(rep["points"][k]["exact"] for k in range(3)) == [["0", "0", "1"], ["0", "1", "0"], ["1", "0", "0"]]


def test_converge_exit_codes(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "converge", "--scenario", "cremona_iterates", "--notion", "strong",
                           "--out", str(tmp_path))
    assert code == 0 and json.loads(out)["verdict"] == "converges"
    assert (tmp_path / "report.json").exists()
    assert (tmp_path / "trace.csv").read_text().startswith("n,distance\n")
    code, out, _ = run_cli(capsys, "converge", "--scenario", "one_over_z_minus", "--notion", "def1")
    assert code == 2 and json.loads(out)["matches_expected"]


def test_malformed_scenario_exit_64(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"schema": 1, "name": ')
    code, _, err = run_cli(capsys, "converge", "--scenario", str(bad))
    assert code == 64 and "error" in err


def test_unknown_example_exit_64(capsys):
    code, _, _ = run_cli(capsys, "reproduce", "nosuch")
    assert code == 64


def test_library_error_exit_70(capsys, tmp_path):
    # a family scenario without a schedule long enough for the Fatou grid
    path = tmp_path / "short.json"
    path.write_text(json.dumps({"schema": 1, "name": "short", "map": {"builtin": "cremona"},
                                "schedule": [1, 2]}))
    code, _, err = run_cli(capsys, "fatou", "--scenario", str(path))
    assert code == 70 and "ScheduleTooShort" in err


def test_volume_reports_pullback_area(capsys):
    code, out, _ = run_cli(capsys, "volume", "--map", "id_disc_to_cp1")
    rep = json.loads(out)
    assert code == 0 and rep["term"] == "pullback"
    r = rep["reported"]
    assert abs(r["value"] - math.pi / 2) < 3 * r["stderr"]


def test_volume_worker_invariance(capsys):
    outs = [run_cli(capsys, "volume", "--map", "id_disc_to_cp1", "--workers", w)[1] for w in ("1", "4")]
    assert outs[0] == outs[1]


def test_hausdorff_pair(capsys, tmp_path):
    path = tmp_path / "pair.json"
    path.write_text(json.dumps({
        "schema": 1, "name": "pair",
        "pair": [{"components": ["1", "z - 1/100"], "source": {"kind": "affine", "dim": 1}},
                 {"components": ["1", "z"], "source": {"kind": "affine", "dim": 1}}],
        "region": {"kind": "polydisc", "center": [0], "radii": [1]}}))
    code, out, _ = run_cli(capsys, "hausdorff", "--scenario", str(path))
    rep = json.loads(out)
    assert code == 0 and rep["hausdorff"] < 0.05


def test_fatou_outputs(capsys, tmp_path):
    path = tmp_path / "small.json"
    path.write_text(json.dumps({"schema": 1, "name": "small",
                                "map": {"components": ["z0", "2*z1", "2*z2"], "source": {"kind": "projective", "dim": 2}},
                                "schedule": [10, 13, 16, 19, 22, 25, 28, 31],
                                "fatou": {"resolution": 9, "spacing": 0.125}}))
    code, out, _ = run_cli(capsys, "fatou", "--scenario", str(path), "--out", str(tmp_path / "o"))
    assert code == 0
    names = sorted(p.name for p in (tmp_path / "o").iterdir())
    assert names == ["dichotomy.json", "fatou.csv", "fatou.json", "fatou.pgm"]
    dich = json.loads((tmp_path / "o" / "dichotomy.json").read_text())
    assert dich["curve"]["degree"] == 1 and dich["curve"]["equation"] == "z0"


def test_list_examples(capsys):
    code, out, _ = run_cli(capsys, "list-examples")
    assert code == 0
    for name in rp.CATALOGUE:
        assert name in out


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "merodyn.cli", "iterate", "--map", "cremona", "-k", "2"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and json.loads(res.stdout)["is_identity"]


# ------------------------------------------------------------ reproduction


@pytest.mark.parametrize("example", ["example1", "example2"])
def test_reproduce_byte_identical(capsys, tmp_path, example):
    outs = []
    for w in ("1", "1", "3"):
        d = tmp_path / f"w{w}-{len(outs)}"
        code, _, err = run_cli(capsys, "reproduce", example, "--workers", w, "--out", str(d))
        assert code == 0, err
        outs.append((d / f"{example}.json").read_bytes())
    assert outs[0] == outs[1] == outs[2]
