import csv
import io
import json

import pytest

from qtoken.cli import main


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.fixture
def dv_config(tmp_path):
    return write(tmp_path / "dv.json", {"family": "dv", "family_params": {"n": 8}, "trials": 30, "master_seed": 5})


def test_run_writes_jsonl(tmp_path, dv_config):
    out = tmp_path / "res.jsonl"
    assert main(["run", "--config", dv_config, "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 30 and all(json.loads(x)["accept"] for x in lines)


def test_seed_and_set_overrides(tmp_path, dv_config):
    a, b, c = (tmp_path / n for n in ("a", "b", "c"))
    main(["attack", "--config", dv_config, "--strategy", "random", "--out", str(a)])
    main(["attack", "--config", dv_config, "--strategy", "random", "--out", str(b), "--seed", "6"])
    main(["attack", "--config", dv_config, "--strategy", "random", "--out", str(c), "--set", "master_seed=6", "--threads", "3"])
    assert a.read_text() != b.read_text()
    assert b.read_text() == c.read_text()


def test_threads_env_var(tmp_path, dv_config, monkeypatch):
    monkeypatch.setenv("QTOKEN_THREADS", "4")
    out = tmp_path / "env.jsonl"
    assert main(["run", "--config", dv_config, "--out", str(out)]) == 0
    monkeypatch.delenv("QTOKEN_THREADS")
    again = tmp_path / "one.jsonl"
    main(["run", "--config", dv_config, "--out", str(again)])
    assert out.read_text() == again.read_text()


def test_issue_then_verify(tmp_path, dv_config, capsys):
    issued = tmp_path / "tok.json"
    assert main(["issue", "--config", dv_config, "--out", str(issued)]) == 0
    capsys.readouterr()
    assert main(["verify", "--token", str(issued)]) == 0
    assert json.loads(capsys.readouterr().out)["verdict"] == "accept"


def test_verify_serial_mismatch_is_a_reject_not_an_error(tmp_path, dv_config, capsys):
    one, two = tmp_path / "1.json", tmp_path / "2.json"
    main(["issue", "--config", dv_config, "--out", str(one)])
    main(["issue", "--config", dv_config, "--seed", "99", "--out", str(two)])
    capsys.readouterr()
    assert main(["verify", "--token", str(one), "--secret", str(two)]) == 0
    verdict = json.loads(capsys.readouterr().out)
    assert verdict["verdict"] == "reject" and verdict["reason"] == "serial mismatch"


def test_issue_verify_ensemble(tmp_path, capsys):
    cfg = write(tmp_path / "e.json", {"family": "ensemble", "family_params": {"N": 3, "M": 4, "tau": 1.0, "T": 4}, "trials": 1, "master_seed": 1})
    coin = tmp_path / "coin.json"
    assert main(["issue", "--config", cfg, "--out", str(coin)]) == 0
    capsys.readouterr()
    assert main(["verify", "--token", str(coin)]) == 0
    assert json.loads(capsys.readouterr().out)["accept"] is True


@pytest.mark.parametrize("family_cfg", [
    {"family": "cv", "family_params": {"codebook": {"symbols": [[0, 0]]}}, "trials": 1, "master_seed": 1},
    {"family": "puf", "family_params": {"dim": 2, "k": 2, "accept_min": 1}, "trials": 1, "master_seed": 1},
])
def test_issue_other_families_hides_device_secrets(tmp_path, family_cfg):
    out = tmp_path / "i.json"
    assert main(["issue", "--config", write(tmp_path / "c.json", family_cfg), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert "hidden_unitary" not in json.dumps(doc.get("device", {}))


def test_config_errors_exit_1(tmp_path, capsys):
    bad = write(tmp_path / "bad.json", {"family": "dv", "family_params": {"n": 0}, "trials": 1, "master_seed": 1})
    assert main(["run", "--config", bad]) == 1
    assert "/family_params/n" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 1
    assert main(["run"]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["attack", "--config", bad.replace("bad", "bad")]) == 1


def test_attack_requires_strategy(tmp_path, dv_config):
    assert main(["attack", "--config", dv_config]) == 1


def test_sweep_csv_rows(tmp_path, dv_config):
    out = tmp_path / "s.csv"
    assert main(["sweep", "--config", dv_config, "--param", "channel.loss", "--values", "0,0.1,0.2", "--out", str(out)]) == 0
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    assert [r["channel.loss"] for r in rows] == ["0", "0.1", "0.2"]
    assert float(rows[0]["accept_rate"]) == 1.0


def test_report_empty_and_corrupt(tmp_path, dv_config, capsys):
    empty = tmp_path / "e.jsonl"
    empty.write_text("")
    assert main(["report", str(empty)]) == 0
    assert "0 records" in capsys.readouterr().out
    res = tmp_path / "r.jsonl"
    main(["run", "--config", dv_config, "--out", str(res)])
    res.write_text(res.read_text() + "garbage\n")
    summary = tmp_path / "summary.csv"
    assert main(["report", str(res), "--out", str(summary)]) == 0
    assert "1 corrupt" in capsys.readouterr().out
    assert summary.read_text().startswith("family,")


def test_report_is_deterministic(tmp_path, dv_config, capsys):
    texts = []
    for i in range(2):
        res = tmp_path / f"r{i}.jsonl"
        main(["run", "--config", dv_config, "--out", str(res)])
        capsys.readouterr()
        main(["report", str(res)])
        texts.append(capsys.readouterr().out)
    assert texts[0] == texts[1]


def test_design_feasible_and_infeasible(tmp_path, capsys):
    ok = write(tmp_path / "d.json", {"targets": {"false_accept": 1e-6, "false_reject": 1e-2}, "N_max": 2, "samples": 5000})
    out = tmp_path / "policy.json"
    assert main(["design", "--config", ok, "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["certificate"]["false_accept"] < 1e-6
    assert "certificate" in capsys.readouterr().err
    bad = write(tmp_path / "x.json", {"targets": {"false_accept": 1e-22, "false_reject": 1e-3}, "N_max": 1, "M_max": 1, "samples": 1000})
    assert main(["design", "--config", bad]) == 2
    assert "best achieved" in capsys.readouterr().err
    schema_bad = write(tmp_path / "y.json", {"targets": {"false_accept": 2}})
    assert main(["design", "--config", schema_bad]) == 1


def test_presets_export_round_trip(tmp_path, capsys):
    out = tmp_path / "p.json"
    assert main(["presets", "--out", str(out)]) == 0
    listing = capsys.readouterr().out
    assert "Eu:YSO" in listing and "Si:P" in listing
    assert main(["presets", "--config", str(out)]) == 0
    assert capsys.readouterr().out == listing
