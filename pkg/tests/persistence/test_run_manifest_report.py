"""Tests for run manifests and the comparison report"""

import json

import pytest

from src.core.errors import CacheConflict, CacheCorrupt, InputMissing, VersionUnsupported
from src.persistence.report import cell, check_against_log, render_json, render_table
from src.persistence.run_manifest import (
    RunManifest,
    RunResults,
    epoch_records,
    read_run_manifest,
    results_from_history,
    write_run_manifest,
)
from src.training.trainer import EpochRecord


def history(n_train=7, n_fewshot=0):
    records = [EpochRecord("train", e, {"loss_cls": 1.0 / e, "acc_id": 0.1 * e, "acc_ood": 0.05 * e})
               for e in range(1, n_train + 1)]
    records += [EpochRecord("fewshot", e, {"loss_cls": 0.5, "acc_id": 0.5, "acc_ood": 0.3 + 0.01 * e})
                for e in range(1, n_fewshot + 1)]
    return records


def manifest(name="cls+im_cst", records=None, results=None):
    records = records if records is not None else history()
    return RunManifest(
        name=name,
        command="train",
        config={"losses": {"enabled": ["cls", "im_cst"]}, "seed": 0},
        seeds={"seed": 0},
        teacher_generator_id="synthetic:seed=0",
        epochs=[r.to_dict() for r in records],
        results=results or results_from_history(records),
    )


def test_results_average_last_five_epochs():
    results = results_from_history(history(7, 3))
    assert results.id_accuracy == pytest.approx(0.5)
    assert results.ood_zero_shot == pytest.approx(0.25)
    assert results.ood_fewshot == pytest.approx(0.32)


def test_results_without_fewshot_and_without_evaluation():
    assert results_from_history(history(3)).ood_fewshot is None
    with pytest.raises(ValueError):
        results_from_history([EpochRecord("train", 1, {"loss_cls": 1.0})])


def test_write_once(tmp_path):
    path = tmp_path / "run.json"
    m = manifest()
    write_run_manifest(str(path), m)
    before = path.read_bytes()
    write_run_manifest(str(path), m)
    assert path.read_bytes() == before
    with pytest.raises(CacheConflict):
        write_run_manifest(str(path), manifest(name="other"))
    assert path.read_bytes() == before


def test_read_back(tmp_path):
    path = tmp_path / "run.json"
    write_run_manifest(str(path), manifest())
    loaded = read_run_manifest(str(path))
    assert loaded == manifest()
    assert [r.epoch for r in epoch_records(loaded)] == list(range(1, 8))


def test_read_errors(tmp_path):
    with pytest.raises(InputMissing):
        read_run_manifest(str(tmp_path / "absent.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{", encoding="utf-8")
    with pytest.raises(CacheCorrupt):
        read_run_manifest(str(bad))
    old = tmp_path / "old.json"
    old.write_text(json.dumps({**manifest().to_dict(), "schema_version": 0}), encoding="utf-8")
    with pytest.raises(VersionUnsupported):
        read_run_manifest(str(old))


def test_cell_format():
    m = manifest(results=RunResults(id_accuracy=0.8123, ood_zero_shot=0.2, ood_fewshot=None))
    assert cell(m) == "81.2 / 20.0 / -"


def test_table_has_three_cells_per_row():
    table = render_table([manifest("cls"), manifest("cls+im_cst", records=history(7, 2))])
    lines = table.splitlines()
    assert lines[0].startswith("run")
    assert len(lines) == 4
    assert lines[2].rstrip().endswith("50.0 / 25.0 / -")
    assert lines[3].rstrip().endswith("50.0 / 25.0 / 31.5")


def test_results_checked_against_log():
    tampered = manifest(results=RunResults(id_accuracy=0.99, ood_zero_shot=0.25))
    with pytest.raises(CacheCorrupt):
        check_against_log(tampered)
    with pytest.raises(CacheCorrupt):
        render_table([tampered])


def test_reports_regenerate_byte_identically(tmp_path):
    path = tmp_path / "run.json"
    write_run_manifest(str(path), manifest(records=history(6, 4)))
    first = (render_table([read_run_manifest(str(path))]), render_json([read_run_manifest(str(path))]))
    second = (render_table([read_run_manifest(str(path))]), render_json([read_run_manifest(str(path))]))
    assert first == second
    assert json.loads(first[1])["schema_version"] == 1
