"""End-to-end tests of the vl-distill command line on the synthetic fixture config"""

import json
from pathlib import Path

import numpy as np
import pytest

from src.core.embedding import FeatureKind, FeatureMatrix
from src.main import main
from src.persistence.feature_cache import cache_write

CONFIG = str(Path(__file__).resolve().parents[2] / "data" / "fixtures" / "synthetic.yaml")


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["--config", CONFIG, "--out", str(out), "train"]) == 0
    return out


def test_train_writes_run_artifacts(run_dir):
    assert (run_dir / "student.pt").is_file()
    assert (run_dir / "student_features.vlmd").is_file()
    assert "phase=train epoch=1 " in (run_dir / "run.log").read_text(encoding="utf-8")
    manifest = json.loads((run_dir / "run.json").read_text(encoding="utf-8"))
    assert manifest["command"] == "train"
    assert len(manifest["epochs"]) == 6
    assert {m["dataset"] for m in manifest["results"]["metrics"]} == {"train", "id", "ood"}


def test_report_renders_trained_run(run_dir, capsys):
    code, out, _ = run(capsys, "--out", str(run_dir), "report")
    assert code == 0
    assert "cls+im_cst" in out

    code, out, _ = run(capsys, "report", str(run_dir), "--json")
    assert code == 0
    rows = json.loads(out)["rows"]
    assert len(rows) == 1 and rows[0]["run"] == "cls+im_cst"


def test_retrieval_without_cache_term_matches_zero_shot_eval(run_dir, capsys):
    code, out, _ = run(capsys, "--config", CONFIG, "--out", str(run_dir), "--alpha", "0", "retrieval")
    assert code == 0
    retrieval = json.loads(out)

    code, out, _ = run(capsys, "--config", CONFIG, "--out", str(run_dir), "--shots", "3", "eval")
    assert code == 0
    ood = json.loads(out)["ood_eval"]
    assert retrieval["queries"] == ood["count"]
    assert retrieval["accuracy"] == ood["accuracy"]


def test_metrics_on_identical_caches(tmp_path, capsys):
    rng = np.random.default_rng(0)
    data = rng.standard_normal((10, 4))
    data /= np.linalg.norm(data, axis=1, keepdims=True)
    ids = tuple(f"s{i}" for i in range(10))
    cache_write(str(tmp_path / "student.vlmd"), FeatureMatrix(data, ids, FeatureKind.STUDENT_VISUAL))
    cache_write(str(tmp_path / "teacher.vlmd"), FeatureMatrix(data, ids, FeatureKind.TEACHER_VISUAL))

    code, out, _ = run(capsys, "--teacher-cache", str(tmp_path / "teacher.vlmd"), "--k", "3",
                       "metrics", "--student-cache", str(tmp_path / "student.vlmd"))
    assert code == 0
    reports = {r["metric"]: r for r in map(json.loads, out.splitlines())}
    assert reports["M_rel"]["value"] == pytest.approx(1.0)
    assert reports["M_neigh"]["value"] == pytest.approx(1.0)
    assert reports["M_neigh"]["params"] == {"k": 3}


def test_missing_config_exits_with_config_error(tmp_path, capsys):
    code, _, err = run(capsys, "--config", str(tmp_path / "absent.yaml"), "train")
    assert code == 2
    record = json.loads(err.strip().splitlines()[-1])
    assert record["exit_code"] == 2
    assert record["error"]["code"] == "ConfigInvalid"


def test_missing_student_exits_with_input_error(tmp_path, capsys):
    code, _, err = run(capsys, "--config", CONFIG, "--out", str(tmp_path / "empty"), "eval")
    assert code == 3
    assert json.loads(err.strip().splitlines()[-1])["error"]["code"] == "InputMissing"


def test_spectrum_needs_caches(capsys):
    code, _, err = run(capsys, "spectrum")
    assert code == 2
    assert "NAME=PATH" in err
