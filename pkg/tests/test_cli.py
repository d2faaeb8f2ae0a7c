import json

from mmsim.cli import main

CFG = {"topology": {"tree": {}, "handover_pair": [1, 1]}, "scheme": "mnm", "t_end": 3.0}


def write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def body(text):
    return [l for l in text.splitlines() if not l.startswith("#")]


def test_run_writes_csv(tmp_path, capsys):
    assert main(["run", "--config", write(tmp_path, CFG)]) == 0
    lines = body(capsys.readouterr().out)
    assert lines[0].startswith("scenario_id,scheme")
    assert lines[1].split(",")[1] == "mnm"


def test_scheme_and_seed_override(tmp_path):
    out = tmp_path / "o.csv"
    assert main(["run", "--config", write(tmp_path, CFG), "--scheme", "hawaii", "--seed", "7",
                 "--out", str(out)]) == 0
    row = body(out.read_text())[1].split(",")
    assert row[1] == "hawaii" and row[11] == "7"


def test_run_is_byte_identical(tmp_path):
    cfg = write(tmp_path, CFG)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["run", "--config", cfg, "--out", str(a)])
    main(["run", "--config", cfg, "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_validation_error_exit_code(tmp_path, capsys):
    assert main(["run", "--config", write(tmp_path, {**CFG, "scheme": "foo"})]) == 1
    assert "scheme" in capsys.readouterr().err


def test_missing_file_exit_code(tmp_path):
    assert main(["run", "--config", str(tmp_path / "absent.json")]) == 1


def test_simulation_error_exit_code(tmp_path, capsys):
    bad = {**CFG, "topology": {"tree": {}}, "mobility": {"attach_ar": 7,
                                                          "script": [{"time": 1, "from": 7, "to": 12}]}}
    # 12 is not a radio neighbour of 7, so the proactive handover is refused mid-run
    assert main(["run", "--config", write(tmp_path, bad)]) == 2


def test_trace_and_estimate(tmp_path, capsys):
    assert main(["trace", "--config", write(tmp_path, CFG)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "time,seq,via_ar,dup,hops" and len(lines) > 100
    assert main(["estimate", "--x", "2", "--y", "3", "--l", "4", "--mode", "inter"]) == 0
    assert capsys.readouterr().out.splitlines()[1] == "inter,2,3,4,24"


def test_sweep_verb(tmp_path):
    spec = {"base": CFG, "link_delays": [0.01], "hop_pairs": [[1, 1], [2, 2]]}
    out = tmp_path / "s.csv"
    assert main(["sweep", "--config", write(tmp_path, spec), "--out", str(out), "--scheme", "cip"]) == 0
    rows = body(out.read_text())
    assert len(rows) == 3 and all(",cip," in r for r in rows[1:])
