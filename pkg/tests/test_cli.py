import csv
import json
import shutil
import subprocess
from pathlib import Path

import pytest

from magweyl import cli
from magweyl.config import parse_config, worker_count
from magweyl.errors import InputError, NumericError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
QUICK = ["--hbar", "1", "0.5", "0.25", "--omega", "4"]


def run(tmp_path, *args, config="constant_field.json"):
    path = config if isinstance(config, Path) else CONFIGS / config
    return cli.main([*args, "--config", str(path), "--out", str(tmp_path / "run")])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def only(tmp_path, pattern):
    hits = sorted(tmp_path.glob(pattern))
    assert len(hits) == 1, hits
    return hits[0]


def test_validate_constant_field(tmp_path, capsys):
    assert run(tmp_path, "validate") == 0
    doc = json.loads(only(tmp_path, "run_validate_*.json").read_text())
    assert doc["field"]["closed"] and doc["field"]["antisymmetric"]
    assert "closedness defect" in capsys.readouterr().out


def test_artifact_name_carries_config_digest(tmp_path):
    assert run(tmp_path, "validate") == 0
    cfg = parse_config(json.loads((CONFIGS / "constant_field.json").read_text()))
    assert (tmp_path / f"run_validate_{cfg.digest()}.json").exists()
    assert not list(tmp_path.glob("*.part"))


def test_digest_ignores_output_prefix():
    obj = json.loads((CONFIGS / "constant_field.json").read_text())
    a = parse_config(obj).digest()
    obj["output"] = "elsewhere/x"
    assert parse_config(obj).digest() == a
    obj["seed"] = 99
    assert parse_config(obj).digest() != a


def test_config_round_trip_is_fixed_point():
    for name in ("constant_field.json", "quasi_periodic.json", "non_closed_n3.json"):
        cfg = parse_config(json.loads((CONFIGS / name).read_text()))
        once = cfg.to_json()
        assert parse_config(json.loads(json.dumps(once))).to_json() == once


def test_malformed_json_exits_with_location(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"model": {"d": 2,\n  "n": 2,, }}')
    assert run(tmp_path, "validate", config=bad) == 2
    err = capsys.readouterr().err
    assert "line 2 column" in err


def test_invalid_config_exits_two(tmp_path, capsys):
    obj = json.loads((CONFIGS / "constant_field.json").read_text())
    obj["hbar_list"] = [2.0, 1.0, 0.5]
    path = tmp_path / "c.json"
    path.write_text(json.dumps(obj))
    assert run(tmp_path, "validate", config=path) == 2
    assert "hbar" in capsys.readouterr().err
    assert run(tmp_path, "validate", config=tmp_path / "missing.json") == 2


def test_strict_validate_rejects_non_closed_field(tmp_path):
    assert run(tmp_path, "validate", config="non_closed_n3.json") == 0
    assert run(tmp_path, "validate", "--strict", config="non_closed_n3.json") == 1
    assert run(tmp_path, "validate", "--strict") == 0


def test_flux_table_matches_oracle(tmp_path):
    assert run(tmp_path, "flux", config="quasi_periodic.json") == 0
    rows = read_csv(only(tmp_path, "run_flux_*.csv"))
    assert rows[0][:2] == ["index", "a1"] and rows[0][-3:] == ["flux", "oracle", "abs_diff"]
    assert len(rows) == 11
    assert max(float(r[-1]) for r in rows[1:]) <= 1e-8


def test_compose_table(tmp_path):
    assert run(tmp_path, "compose", *QUICK) == 0
    rows = read_csv(only(tmp_path, "run_compose_*.csv"))
    assert rows[0] == ["hbar", "product_l1", "tolerance", "distance_to_untwisted_l1"]
    assert [float(r[0]) for r in rows[1:]] == [0.0, 1.0, 0.5, 0.25]
    dist = [float(r[3]) for r in rows[2:]]
    assert dist == sorted(dist, reverse=True)


def test_expand_table(tmp_path):
    assert run(tmp_path, "expand", *QUICK) == 0
    rows = read_csv(only(tmp_path, "run_expand_*.csv"))
    assert rows[0] == ["hbar", "first_order_defect", "remainder_norm", "reliable"]
    assert all(r[3] in ("true", "false") for r in rows[1:])
    doc = json.loads(only(tmp_path, "run_expand_*.json").read_text())
    assert 0.8 <= doc["first_order_slope"] <= 1.2


def test_represent_table(tmp_path):
    assert run(tmp_path, "represent", "--hbar", "1", "0.5", "--omega", "4") == 0
    rows = read_csv(only(tmp_path, "run_represent_*.csv"))
    assert rows[0][0] == "hbar" and rows[0][-1] == "convention_lock"
    for r in rows[1:]:
        assert float(r[1]) <= float(r[2])
        assert float(r[-1]) <= 1e-8


def test_audit_writes_json_and_csv(tmp_path, capsys):
    assert run(tmp_path, "audit", "--hbar", "1", "0.5", "0.25", config="non_closed_n3.json") == 0
    doc = json.loads(only(tmp_path, "run_audit_*.json").read_text())
    rows = read_csv(only(tmp_path, "run_audit_*.csv"))
    assert len(rows) == 1 + len(doc["rows"])
    assert "failed" in capsys.readouterr().out


def test_audit_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        d.mkdir()
        assert run(d, "audit", "--hbar", "1", "0.5", "0.25", config="non_closed_n3.json") == 0
    ca, cb = only(a, "run_audit_*.csv"), only(b, "run_audit_*.csv")
    assert ca.name == cb.name and ca.read_bytes() == cb.read_bytes()


def test_seed_override_changes_digest(tmp_path):
    run(tmp_path, "validate")
    run(tmp_path, "validate", "--seed", "123")
    assert len(list(tmp_path.glob("run_validate_*.json"))) == 2


def test_failed_run_removes_its_artifacts(tmp_path, monkeypatch, capsys):
    def broken(config, args, art):
        art.write("csv", "partial\n")
        raise NumericError("quadrature did not converge")

    monkeypatch.setitem(cli.COMMANDS, "flux", broken)
    assert run(tmp_path, "flux") == 3
    assert not list(tmp_path.iterdir())
    assert "numerical failure" in capsys.readouterr().err

    def rejected(config, args, art):
        art.write("json", "{}")
        raise InputError("bad sample")

    monkeypatch.setitem(cli.COMMANDS, "flux", rejected)
    assert run(tmp_path, "flux") == 2
    assert not list(tmp_path.iterdir())


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("MAGWEYL_THREADS", "2")
    assert worker_count() == 2
    monkeypatch.setenv("MAGWEYL_THREADS", "many")
    with pytest.raises(InputError):
        worker_count()


@pytest.mark.skipif(shutil.which("magweyl") is None, reason="console script not installed")
def test_console_script(tmp_path):
    proc = subprocess.run(["magweyl", "validate", "--config", str(CONFIGS / "constant_field.json"),
                           "--out", str(tmp_path / "cs")], capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0, proc.stderr
    assert list(tmp_path.glob("cs_validate_*.json"))
