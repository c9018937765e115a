import json

import pytest
import yaml

from circlab.cli import main
from circlab.config import ConfigError, parse_config, task_stream_seed
from circlab.runner import format_table, summarize_manifests


def write_cfg(tmp_path, body, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(body))
    return path


LAW = {"experiment": "law", "grid": {"n": [200], "d": [20], "eps": [0.1], "z": [1.5],
                                     "xi": ["rademacher"]}, "seeds": [0]}


def test_empty_grid_axis_is_usage_error(tmp_path, capsys):
    body = {**LAW, "grid": {**LAW["grid"], "n": []}, "output": str(tmp_path / "o")}
    assert main(["run", str(write_cfg(tmp_path, body))]) == 2
    assert "grid.n" in capsys.readouterr().err


def test_unknown_key_is_usage_error(tmp_path, capsys):
    body = {**LAW, "output": str(tmp_path / "o"), "colour": "red"}
    assert main(["run", str(write_cfg(tmp_path, body))]) == 2
    assert "colour" in capsys.readouterr().err


def test_precondition_names_field():
    with pytest.raises(ConfigError, match="p = d/n"):
        parse_config({**LAW, "grid": {**LAW["grid"], "d": [150]}, "output": "x"})
    with pytest.raises(ConfigError, match="grid.eps"):
        parse_config({**LAW, "grid": {k: v for k, v in LAW["grid"].items() if k != "eps"},
                      "output": "x"})


def test_missing_config_and_bad_args(tmp_path):
    assert main(["run", str(tmp_path / "nope.yaml")]) == 2
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2


def test_stream_seed_is_stable():
    a = task_stream_seed({"n": 200, "z": "(1.5+0j)"}, 3)
    assert a == task_stream_seed({"z": "(1.5+0j)", "n": 200}, 3)
    assert a != task_stream_seed({"n": 200, "z": "(1.5+0j)"}, 4)
    assert 0 <= a < 2**64


def test_law_run_one_row_and_reproducible(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        body = {**LAW, "output": str(out)}
        assert main(["run", str(write_cfg(tmp_path, body))]) == 0
        lines = (out / "law.csv").read_text().splitlines()
        assert len(lines) == 2
        outs.append(json.loads((out / "manifest.json").read_text()))
    assert outs[0]["outputs"] == outs[1]["outputs"]


def test_workers_do_not_change_outputs(tmp_path):
    body = {"experiment": "walk", "grid": {"T": [32], "q": [0.001, 0.01]},
            "seeds": {"base": 0, "count": 2}, "trials": 500}
    digests = []
    for w in (1, 2):
        out = tmp_path / f"w{w}"
        assert main(["run", str(write_cfg(tmp_path, {**body, "output": str(out)})),
                     "--workers", str(w)]) == 0
        digests.append(json.loads((out / "manifest.json").read_text())["outputs"])
    assert digests[0] == digests[1]


def test_summarize_single_run(tmp_path, capsys):
    out = tmp_path / "run"
    main(["run", str(write_cfg(tmp_path, {**LAW, "output": str(out)}))])
    capsys.readouterr()
    assert main(["summarize", str(out)]) == 0
    text = capsys.readouterr().out
    assert "law" in text and "1/1" in text
    assert (out / "summary.csv").read_text().startswith("experiment,tasks,passed")


def test_summarize_mixed_statuses_by_hand():
    man = {"experiment": "process", "tasks": [
        {"status": "ok", "metrics": {"dev": 0.1, "margin": 2.0}},
        {"status": "assertion-failed", "metrics": {"dev": 0.3, "margin": -1.0}},
        {"status": "error", "metrics": {}}]}
    (row,) = summarize_manifests([man])
    assert row["tasks"] == 3 and row["passed"] == 1
    assert row["pass_rate"] == pytest.approx(1 / 3)
    assert row["mean_dev"] == pytest.approx(0.2) and row["min_margin"] == -1.0
    assert "1/3" in format_table([row])


def test_summarize_errors(tmp_path, capsys):
    assert main(["summarize", str(tmp_path)]) == 2
    assert "no manifest" in capsys.readouterr().err
    (tmp_path / "manifest.json").write_text("{broken")
    assert main(["summarize", str(tmp_path)]) == 2
    assert "corrupt" in capsys.readouterr().err


def test_failed_and_crashed_tasks_give_exit_one(tmp_path, monkeypatch, capsys):
    from circlab import runner

    def fake(cfg, params, seed, stream):
        if params["q"] > 0.5:
            raise RuntimeError("boom")
        return [], {}, {"hard": params["q"] < 0.1}, {"dev": 0.0, "margin": 0.0}

    monkeypatch.setitem(runner.TASKS, "walk", fake)
    body = {"experiment": "walk", "grid": {"T": [16], "q": [0.01, 0.2, 0.9]}, "seeds": [0],
            "output": str(tmp_path / "o")}
    assert main(["run", str(write_cfg(tmp_path, body)), "--workers", "1"]) == 1
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert [t["status"] for t in man["tasks"]] == ["ok", "assertion-failed", "error"]
    assert "boom" in man["tasks"][2]["error"]


def test_selftest_command(tmp_path, capsys):
    assert main(["selftest", "--output", str(tmp_path / "st")]) == 0
    assert "checks passed" in capsys.readouterr().out
