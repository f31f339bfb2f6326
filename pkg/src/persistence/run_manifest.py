"""
Run manifests for vl-distill
One immutable JSON document per run: config snapshot, seeds, code version,
teacher generator id, the epoch log and final results
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from src import __version__
from src.core.errors import CacheConflict, CacheCorrupt, InputMissing, VersionUnsupported
from src.persistence.feature_cache import atomic_write_bytes
from src.training.evaluate import average_last
from src.training.trainer import EpochRecord
from src.utils.config import dump_json
from src.utils.logger import get_logger

logger = get_logger(__name__)

SCHEMA_VERSION = 1
LAST_EPOCHS = 5


@dataclass
class RunResults:
    """x1 / x2 / x3: ID accuracy, zero-shot OOD accuracy, few-shot OOD accuracy"""

    id_accuracy: float
    ood_zero_shot: float
    ood_fewshot: Optional[float] = None
    metrics: List[Dict[str, Any]] = field(default_factory=list)


@dataclass
class RunManifest:
    """Everything needed to reproduce and report one run"""

    name: str
    command: str
    config: Dict[str, Any]
    seeds: Dict[str, int]
    teacher_generator_id: str
    epochs: List[Dict[str, Any]]
    results: RunResults
    code_version: str = __version__
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunManifest":
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise VersionUnsupported(version, SCHEMA_VERSION)
        try:
            values = dict(data)
            values["results"] = RunResults(**values["results"])
            return cls(**values)
        except (KeyError, TypeError) as e:
            raise CacheCorrupt(f"Bad run manifest: {e}")


def results_from_history(records: Sequence[EpochRecord], last: int = LAST_EPOCHS) -> RunResults:
    """
    Final accuracies as the mean over the last logged epochs

    Args:
        records: Epoch log of the base phase and, optionally, the few-shot phase
        last: Number of trailing evaluated epochs averaged

    Returns:
        RunResults
    """
    def series(phase: str, key: str) -> List[float]:
        return [r.values[key] for r in records if r.phase == phase and key in r.values]

    id_acc = series("train", "acc_id")
    ood_acc = series("train", "acc_ood")
    if not id_acc or not ood_acc:
        raise ValueError("Epoch log has no evaluated epochs (set eval_every >= 1)")
    fewshot = series("fewshot", "acc_ood")
    return RunResults(
        id_accuracy=average_last(id_acc, last),
        ood_zero_shot=average_last(ood_acc, last),
        ood_fewshot=average_last(fewshot, last) if fewshot else None,
    )


def write_run_manifest(path: str, manifest: RunManifest) -> Path:
    """Write once, atomically; an existing manifest with other content is never replaced"""
    target = Path(path)
    text = dump_json(manifest.to_dict())
    if target.exists():
        if target.read_text(encoding="utf-8") == text:
            return target
        raise CacheConflict(f"Run manifest already exists: {target}", path=str(target))
    atomic_write_bytes(target, text.encode("utf-8"))
    logger.info(f"Wrote run manifest {target}")
    return target


def read_run_manifest(path: str) -> RunManifest:
    source = Path(path)
    if not source.is_file():
        raise InputMissing(f"Run manifest not found: {path}", path=str(path))
    try:
        data = json.loads(source.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise CacheCorrupt(f"{path}: unreadable run manifest ({e})", path=str(path))
    return RunManifest.from_dict(data)


def epoch_records(manifest: RunManifest) -> List[EpochRecord]:
    return [EpochRecord(e["phase"], e["epoch"], dict(e["values"])) for e in manifest.epochs]
