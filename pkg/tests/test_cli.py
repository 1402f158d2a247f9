import json
import subprocess
import sys

import pytest

from deconlab.cli import main
from deconlab.scenarios import SCENARIO_IDS, shipped_scenario_text


@pytest.fixture
def cfg_file(tmp_path):
    def write(**kw):
        doc = {"scenario": "d", "n": 400, "replicates": 2, "bootstrap": 0,
               "estimators": ["naive", "adjusted:M"], **kw}
        p = tmp_path / "exp.json"
        p.write_text(json.dumps(doc))
        return p
    return write


def test_run_writes_csv_and_is_repeatable(cfg_file, tmp_path, capsys):
    out = tmp_path / "res.csv"
    assert main(["run", "--config", str(cfg_file()), "--out", str(out)]) == 0
    first = out.read_text()
    assert main(["run", "--config", str(cfg_file()), "--out", str(out), "--jobs", "2"]) == 0
    assert out.read_text() == first
    assert (tmp_path / "res.csv.meta.json").exists()
    assert "wrote 4 rows" in capsys.readouterr().out


def test_run_seed_flag_and_env(cfg_file, tmp_path, monkeypatch):
    paths = {}
    for label, args, env in [("cli", ["--seed", "7"], None), ("env", [], "7"), ("base", [], None)]:
        if env is None:
            monkeypatch.delenv("DECONLAB_SEED", raising=False)
        else:
            monkeypatch.setenv("DECONLAB_SEED", env)
        paths[label] = tmp_path / f"{label}.csv"
        assert main(["run", "--config", str(cfg_file()), "--out", str(paths[label]), *args]) == 0
    assert paths["cli"].read_text() == paths["env"].read_text() != paths["base"].read_text()


def test_run_without_output_prints_csv(cfg_file, capsys):
    assert main(["run", "--config", str(cfg_file())]) == 0
    assert capsys.readouterr().out.startswith("scenario,variant,n,m,")


def test_config_error_exit_code(cfg_file, capsys):
    assert main(["run", "--config", str(cfg_file(n=[10, -1]))]) == 1
    assert "$.n[1]" in capsys.readouterr().err
    assert main(["run", "--config", str(cfg_file()), "--jobs", "0"]) == 1


def test_runtime_error_exit_code(cfg_file, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", "--config", str(cfg_file()), "--out", str(blocker / "res.csv")]) == 2


def test_scenarios_commands(tmp_path, capsys):
    assert main(["scenarios", "list"]) == 0
    listed = capsys.readouterr().out.splitlines()
    assert [line[0] for line in listed] == list(SCENARIO_IDS)
    assert main(["scenarios", "show", "e"]) == 0
    assert capsys.readouterr().out == shipped_scenario_text("e")
    assert main(["scenarios", "export", "--dir", str(tmp_path)]) == 0
    assert (tmp_path / "scenario_g.json").read_text() == shipped_scenario_text("g")
    assert main(["scenarios", "show"]) == 1


def test_check_graph(tmp_path, capsys):
    f = tmp_path / "d.json"
    f.write_text(shipped_scenario_text("d"))
    assert main(["check-graph", "--file", str(f), "--treatments", "A5", "--adjust", "M"]) == 3
    out = capsys.readouterr().out
    assert "INVALID" in out and "witness" in out and "m-bias-collider" in out
    assert main(["check-graph", "--file", str(f), "--treatments", "A5", "--adjust", ""]) == 0
    assert "VALID" in capsys.readouterr().out
    assert main(["check-graph", "--file", str(tmp_path / "missing.json")]) in (1, 2)


def test_summarize_assert(cfg_file, tmp_path, capsys):
    out = tmp_path / "res.csv"
    main(["run", "--config", str(cfg_file(replicates=4)), "--out", str(out)])
    capsys.readouterr()
    summary_json = tmp_path / "summary.json"
    code = main(["summarize", str(out), "--json", str(summary_json)])
    assert code == 0
    assert "scenario d" in capsys.readouterr().out
    doc = json.loads(summary_json.read_text())
    assert doc["scenarios"][0]["scenario"] == "d"

    # a fabricated failure: naive registered unbiased but shifted far away
    text = out.read_text().splitlines()
    header = text[0].split(",")
    rows = [line.split(",") for line in text[1:]]
    for i, r in enumerate(rows):
        if r[header.index("estimator")] == "naive":
            r[header.index("bias")] = repr(10.0 + 0.01 * i)
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join([text[0], *(",".join(r) for r in rows)]) + "\n")
    assert main(["summarize", str(bad), "--assert"]) == 3
    assert main(["summarize", str(bad)]) == 0


def test_console_script_entry_point():
    res = subprocess.run([sys.executable, "-m", "deconlab.cli", "scenarios", "list"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("a ")
    res = subprocess.run([sys.executable, "-m", "deconlab.cli", "bogus"], capture_output=True, text=True)
    assert res.returncode == 1
