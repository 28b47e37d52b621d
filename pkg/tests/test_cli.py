import json
import re
from dataclasses import replace

import networkx as nx
import pytest

from ltcblock.cli import main
from ltcblock.config import RunConfig, load_config
from ltcblock.evaluation import parse_metrics_csv
from ltcblock.linksim import default_indoor, default_outdoor


def tiny_config(path, **extra):
    indoor = replace(default_indoor(), n_beams=4, trace_length=400, strong_beam_fraction=1.0)
    outdoor = [replace(p, n_beams=4, trace_length=300) for p in default_outdoor()[:2]]
    cfg = {"horizons": [1, 3], "t_ob": 12, "train": {"epochs": 2},
           "indoor": indoor.to_dict(), "outdoor": [p.to_dict() for p in outdoor],
           "gradcheck": {"instances": 2, "eps": 1e-4, "tolerance": 1e-3}}
    cfg.update(extra)
    path.write_text(json.dumps(cfg))
    return path


def read_bytes(root, rel):
    return (root / rel).read_bytes()


def test_config_defaults_resolve():
    cfg = load_config()
    assert cfg.horizons == (1, 5, 10) and cfg.t_ob == 32 and cfg.train.epochs == 40
    assert cfg.indoor.name == "indoor" and len(cfg.outdoor) == 6
    assert RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_flags_override_file(tmp_path):
    path = tiny_config(tmp_path / "c.json")
    cfg = load_config(path, {"epochs": 7, "horizons": [2], "seed": None})
    assert cfg.train.epochs == 7 and cfg.horizons == (2,) and cfg.t_ob == 12


@pytest.mark.parametrize("extra", [{"horizons": []}, {"t_ob": 1}, {"bogus": 1},
                                   {"exclusion": "neither"}, {"train": {"epochs": 0}}])
def test_bad_config_exits_2(tmp_path, extra, capsys):
    path = tiny_config(tmp_path / "c.json", **extra)
    assert main(["wiring", "--config", str(path), "--out-dir", str(tmp_path / "o")]) == 2
    assert "error" in capsys.readouterr().err


def test_unreadable_json_exits_2(tmp_path):
    bad = tmp_path / "c.json"
    bad.write_text("{not json")
    assert main(["wiring", "--config", str(bad)]) == 2


def test_missing_config_file_exits_3(tmp_path):
    assert main(["wiring", "--config", str(tmp_path / "absent.json")]) == 3


def test_wiring_dump(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["wiring", "--out-dir", str(out), "--seed", "3"]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["total_units"] == 9 and stats["ode_neurons"] == 7
    dot = (out / "wiring" / "ncp.dot").read_text()
    edges = [(int(a), int(b)) for a, b in re.findall(r"n(\d+) -> n(\d+)", dot)]
    command = {6, 7}
    g = nx.DiGraph([e for e in edges if not (e[0] in command and e[1] in command)])
    assert nx.is_directed_acyclic_graph(g)
    manifest = json.loads((out / "manifests" / "wiring.json").read_text())
    assert set(manifest["artifacts"]) == {"wiring/ncp.json", "wiring/ncp.dot"}


def test_wiring_invalid_counts_exit_2(tmp_path):
    assert main(["wiring", "--out-dir", str(tmp_path), "--counts", "2,0,2,1"]) == 2


def test_simulate_counts_and_bad_out_dir(tmp_path):
    cfg = tiny_config(tmp_path / "c.json")
    out = tmp_path / "o"
    assert main(["simulate", "--config", str(cfg), "--out-dir", str(out)]) == 0
    assert len(list((out / "scenarios").glob("*.csv"))) == 3
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["simulate", "--config", str(cfg), "--out-dir", str(blocker / "sub")]) == 3


def test_default_simulate_writes_seven_files(tmp_path):
    assert main(["simulate", "--out-dir", str(tmp_path)]) == 0
    assert len(list((tmp_path / "scenarios").glob("*.csv"))) == 7


def test_train_without_scenarios_exits_3(tmp_path):
    cfg = tiny_config(tmp_path / "c.json")
    assert main(["train", "--config", str(cfg), "--out-dir", str(tmp_path / "empty")]) == 3


def test_gradcheck_pass_and_injected_failure(tmp_path, capsys):
    cfg = tiny_config(tmp_path / "c.json")
    assert main(["gradcheck", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 0
    assert capsys.readouterr().out.startswith("PASS")
    assert main(["gradcheck", "--config", str(cfg), "--out-dir", str(tmp_path),
                 "--inject-bug"]) == 1
    text = capsys.readouterr().out
    assert text.startswith("FAIL") and "worst offenders" in text


@pytest.fixture(scope="module")
def pipeline_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipe")
    cfg = tiny_config(root / "c.json")
    out = root / "run"
    assert main(["pipeline", "--config", str(cfg), "--out-dir", str(out)]) == 0
    return root, out


def test_pipeline_layout(pipeline_run):
    _, out = pipeline_run
    for k in (1, 3):
        assert (out / "models" / f"ltc_K{k}.json").exists()
        rows = (out / "models" / f"history_K{k}.csv").read_text().splitlines()
        assert len(rows) == 1 + 2
    rows = parse_metrics_csv((out / "eval" / "metrics.csv").read_text())
    assert len(rows) == 2 * 2
    assert "NOT comparable" in (out / "eval" / "comparison.txt").read_text()
    for cmd in ("simulate", "train", "eval", "pipeline"):
        assert (out / "manifests" / f"{cmd}.json").exists()


def test_pipeline_rerun_from_manifest_is_byte_identical(pipeline_run):
    root, out = pipeline_run
    again = root / "again"
    manifest = out / "manifests" / "pipeline.json"
    assert main(["pipeline", "--config", str(manifest), "--out-dir", str(again)]) == 0
    first = json.loads(manifest.read_text())["artifacts"]
    second = json.loads((again / "manifests" / "pipeline.json").read_text())["artifacts"]
    assert first == second
    for rel in first:
        assert read_bytes(out, rel) == read_bytes(again, rel)


def test_eval_horizon_mismatch_exits_2(pipeline_run, tmp_path):
    root, out = pipeline_run
    # copy the run, then put the K=3 model where the K=1 model should be
    import shutil
    dst = tmp_path / "run"
    shutil.copytree(out, dst)
    shutil.copy(dst / "models" / "ltc_K3.json", dst / "models" / "ltc_K1.json")
    assert main(["eval", "--config", str(root / "c.json"), "--out-dir", str(dst)]) == 2


def test_eval_rerun_is_deterministic(pipeline_run, tmp_path):
    root, out = pipeline_run
    before = read_bytes(out, "eval/metrics.csv")
    assert main(["eval", "--config", str(root / "c.json"), "--out-dir", str(out),
                 "--workers", "2"]) == 0
    assert read_bytes(out, "eval/metrics.csv") == before
