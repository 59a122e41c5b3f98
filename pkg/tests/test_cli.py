import csv
import io
import json
import subprocess
import sys

import pytest

from webgraph_lab.cli import run

from .pipeline import run_pipeline, working_dir


@pytest.fixture(scope="module")
def pipeline_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    return root, run_pipeline(root)


def test_pipeline_artifacts(pipeline_run):
    root, files = pipeline_run
    for name in ("eval/eval_report.json", "eval/folds.csv", "eval/importance.csv", "model/model.json",
                 "attack_content/summary.json", "attack_structure/summary.json",
                 "report/success_collateral.csv", "report/report.json"):
        assert name in files, name
    for step in ("corpus", "graphs", "feats", "labels", "model", "eval", "attack_content", "report"):
        cfg = json.loads(files[f"{step}/config.json"])
        assert cfg["seed"] == 3 and "command" in cfg
    report = json.loads(files["eval/eval_report.json"])
    assert report["k"] == 3 and len(report["folds"]) == 3
    assert sum(report["confusion"].values()) == sum(
        len(files[n].decode().splitlines()) - 1 for n in files if n.startswith("labels/page_")
    )
    assert len([n for n in files if n.startswith("graphs/page_")]) == 12


def test_report_merges_sources(pipeline_run):
    _, files = pipeline_run
    rows = list(csv.DictReader(io.StringIO(files["report/success_collateral.csv"].decode())))
    sources = {r["source"] for r in rows}
    assert sources == {"attack_content", "attack_structure"}
    n_content = len([n for n in files if n.startswith("attack_content/reports/")])
    n_structure = len([n for n in files if n.startswith("attack_structure/reports/")])
    assert len(rows) == n_content + n_structure


def test_structure_trajectories_written(pipeline_run):
    _, files = pipeline_run
    reports = [n for n in files if n.startswith("attack_structure/reports/")]
    trajectories = [n for n in files if n.startswith("attack_structure/trajectories/")]
    assert reports and len(trajectories) == len(reports)


def test_missing_path_is_usage_error(tmp_path, capsys):
    code = run(["build", "--corpus", str(tmp_path / "nope"), "--out", str(tmp_path / "o")])
    assert code == 1
    assert "--corpus" in capsys.readouterr().err
    assert run(["train", "--out", str(tmp_path / "o")]) == 1
    assert run(["bogus"]) == 1
    assert run([]) == 1


def test_bad_config_is_usage_error(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"no_such_key": 1}')
    assert run(["gen", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    cfg.write_text('{"pages": 2, "seed": 4}')
    assert run(["gen", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    echoed = json.loads((tmp_path / "o" / "config.json").read_text())
    assert echoed["pages"] == 2 and echoed["seed"] == 4


def test_bad_data_is_data_error(tmp_path, capsys):
    corpus = tmp_path / "corpus"
    (corpus / "pages").mkdir(parents=True)
    (corpus / "manifest.json").write_text('{"pages": [{"index": 0, "file": "pages/page_0.jsonl"}]}')
    (corpus / "pages" / "page_0.jsonl").write_text('{"record":"page","page_url":"http://a.com/"\n')
    assert run(["build", "--corpus", str(corpus), "--out", str(tmp_path / "g")]) == 2
    assert "data error" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "webgraph_lab.cli", "gen", "--pages", "2", "--out", str(tmp_path / "c")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "c" / "manifest.json").is_file()


def test_pipeline_is_deterministic(tmp_path):
    a = run_pipeline(tmp_path / "a", pages=8)
    with working_dir(tmp_path):
        b = run_pipeline(tmp_path / "nested" / "b", pages=8)
    assert a.keys() == b.keys()
    assert [k for k in a if a[k] != b[k]] == []
