import csv
import json

import pytest

from maurey.cli import OUTPUT_ENV, UsageError, emit_report, main, make_config, parse_n_list, read_json_report


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.mark.parametrize(
    "text, expected",
    [
        ("16,64,256", [16, 64, 256]),
        ("16..128", [16, 32, 64, 128]),
        ("2^4..2^10:4", [16, 64, 256, 1024]),
        ("2^3", [8]),
        ("", []),
    ],
)
def test_parse_n_list(text, expected):
    assert parse_n_list(text) == expected


def test_bad_range():
    with pytest.raises(UsageError):
        parse_n_list("64..16")


def test_empty_n_is_usage_error(tmp_path):
    out = tmp_path / "o"
    assert main(["regions", "--n", "", "--out", str(out)]) == 1
    assert not out.exists()


def test_unknown_command_and_suite(tmp_path):
    assert main(["frobnicate"]) == 1
    assert main(["verify", "--suite", "nope", "--seed", "1", "--out", str(tmp_path)]) == 1
    assert main(["verify", "--suite", "table2", "--out", str(tmp_path)]) == 1
    assert main(["integrate", "--method", "mc", "--out", str(tmp_path)]) == 1


def test_malformed_config(tmp_path):
    bad = tmp_path / "c.json"
    bad.write_text("{not json")
    assert main(["regions", "--config", str(bad)]) == 1
    bad.write_text(json.dumps({"colour": "blue"}))
    assert main(["regions", "--config", str(bad)]) == 1


def test_regions_report(tmp_path):
    assert main(["regions", "--theta", "0.5", "--n", "64", "--out", str(tmp_path)]) == 0
    recs = rows(tmp_path / "regions.csv")
    assert len(recs) == 24
    recs = [r for r in recs if r["target"]]
    assert len(recs) == 12
    assert list(recs[0]) == ["scenario", "theta", "n", "region_id", "integral", "sqrt_integral", "target", "ratio"]
    assert all(0.1 < float(r["ratio"]) < 10 for r in recs)
    assert read_json_report(tmp_path / "regions.json")[0]["region_id"] == recs[0]["region_id"]


def test_verify_table2_example(tmp_path):
    rc = main(["verify", "--suite", "table2", "--theta", "0.5", "--n", "16,64,256", "--seed", "3",
               "--out", str(tmp_path)])
    assert rc == 0
    recs = rows(tmp_path / "verify_table2.csv")
    assert len(recs) == 36
    assert json.loads((tmp_path / "verify_summary.json").read_text())[0]["passed"] is True


def test_fit_slope(tmp_path):
    assert main(["fit", "--scenario", "oh_to_lp", "--theta", "0.5", "--n", "16..4096", "--out", str(tmp_path)]) == 0
    (rec,) = read_json_report(tmp_path / "fit.json")
    assert rec["exponent"] == pytest.approx(0.75, abs=0.02)
    assert list(rec) == ["scenario", "theta_or_n", "exponent", "stderr", "points"]


def test_fit_needs_enough_points(tmp_path):
    assert main(["fit", "--n", "16,64", "--out", str(tmp_path)]) == 1


def test_header_only_csv(tmp_path):
    emit_report([], tmp_path / "empty", "csv", ["a", "b"])
    assert (tmp_path / "empty.csv").read_text() == "a,b\n"


def test_inhomogeneous_records_rejected(tmp_path):
    with pytest.raises(ValueError):
        emit_report([{"a": 1}, {"b": 2}], tmp_path / "x")


def test_json_round_trip(tmp_path):
    recs = [{"k": "x", "v": 0.1 + 0.2, "n": 3, "ok": True}, {"k": "y", "v": 1e-300, "n": 4, "ok": False}]
    emit_report(recs, tmp_path / "r", "json")
    assert read_json_report(tmp_path / "r.json") == recs


def test_config_file_with_flag_override(tmp_path):
    cfg_file = tmp_path / "c.json"
    cfg_file.write_text(json.dumps({"theta": [0.3], "n": "16..64", "resolution": 5}))
    cfg = make_config(["solve", "--config", str(cfg_file), "--resolution", "6"])
    assert cfg.theta == [0.3] and cfg.n == [16, 32, 64] and cfg.resolution == 6


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert main(["regions", "--theta", "0.5", "--n", "16"]) == 0
    assert (tmp_path / "env" / "regions.csv").exists()


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["regions", "--out", str(blocker / "sub")]) == 1


def test_matnorm_command(tmp_path):
    inp = tmp_path / "m.json"
    inp.write_text(json.dumps({"real": [[[1, 0], [0, 0]], [[0, 0], [0, 1]]]}))
    assert main(["matnorm", "--input", str(inp), "--norm", "oh", "--out", str(tmp_path)]) == 0
    assert read_json_report(tmp_path / "matnorm.json")[0]["value"] == 1.0
    assert main(["matnorm", "--out", str(tmp_path)]) == 1


def test_integrate_mc_is_seeded(tmp_path):
    args = ["integrate", "--method", "mc", "--seed", "9", "--n", "4", "--samples", "2000"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "integrate.csv").read_bytes() == (tmp_path / "b" / "integrate.csv").read_bytes()


def test_solve_command(tmp_path):
    assert main(["solve", "--theta", "0.5", "--n", "4", "--resolution", "4", "--out", str(tmp_path)]) == 0
    (rec,) = rows(tmp_path / "solve.csv")
    assert float(rec["lower_bound"]) <= float(rec["objective"]) <= float(rec["upper_bound"])
