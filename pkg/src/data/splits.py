"""
Dataset splits for vl-distill
Samples, ID/OOD label splitting and seeded few-shot draws
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core.embedding import LabelSpace
from src.core.errors import (
    ConfigInvalid,
    EmptyClass,
    IdMismatch,
    InputMissing,
    LabelSpaceError,
    TooFewLabels,
    UnknownSplit,
)
from src.utils.logger import get_logger

logger = get_logger(__name__)

SPLIT_NAMES = ("train", "id_eval", "ood_eval")


@dataclass(frozen=True)
class Sample:
    """One labeled sample; the student input comes from `inputs` or from `image_ref`"""

    sample_id: str
    label: str
    image_ref: Optional[str] = None
    inputs: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
    caption_ref: Optional[str] = None


@dataclass
class SplitDataset:
    """X_train, X_id and X_ood over a LabelSpace"""

    train: Tuple[Sample, ...]
    id_eval: Tuple[Sample, ...]
    ood_eval: Tuple[Sample, ...]
    label_space: LabelSpace
    name: str = "dataset"

    def __post_init__(self):
        self.train = tuple(self.train)
        self.id_eval = tuple(self.id_eval)
        self.ood_eval = tuple(self.ood_eval)
        self.validate()

    def validate(self):
        """Split labels must sit in the right label set and sample ids must be unique"""
        id_labels = set(self.label_space.id_labels)
        ood_labels = set(self.label_space.ood_labels)
        for split in ("train", "id_eval"):
            for sample in getattr(self, split):
                if sample.label not in id_labels:
                    raise LabelSpaceError(f"{split} sample '{sample.sample_id}' has non-ID label '{sample.label}'",
                                          label=sample.label)
        for sample in self.ood_eval:
            if sample.label not in ood_labels:
                raise LabelSpaceError(f"ood_eval sample '{sample.sample_id}' has non-OOD label '{sample.label}'",
                                      label=sample.label)
        ids = [s.sample_id for s in self.all_samples()]
        if len(set(ids)) != len(ids):
            raise IdMismatch("Sample ids must be unique across splits")

    def split(self, name: str) -> Tuple[Sample, ...]:
        if name not in SPLIT_NAMES:
            raise UnknownSplit(name)
        return getattr(self, name)

    def all_samples(self) -> List[Sample]:
        return list(self.train) + list(self.id_eval) + list(self.ood_eval)

    def by_label(self, split: str) -> Dict[str, List[Sample]]:
        groups: Dict[str, List[Sample]] = {}
        for sample in self.split(split):
            groups.setdefault(sample.label, []).append(sample)
        return groups

    def counts(self) -> Dict[str, int]:
        return {
            "train": len(self.train),
            "id_eval": len(self.id_eval),
            "ood_eval": len(self.ood_eval),
            "id_labels": len(self.label_space.id_labels),
            "ood_labels": len(self.label_space.ood_labels),
        }


def load_fixed_split(path: str) -> Tuple[List[str], List[str]]:
    """Read a {"id": [...], "ood": [...]} label split file"""
    source = Path(path)
    if not source.is_file():
        raise InputMissing(f"Split file not found: {path}", path=str(path))
    try:
        record = json.loads(source.read_text(encoding="utf-8"))
        return list(record["id"]), list(record["ood"])
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise ConfigInvalid(f"Bad split file {path}: {e}", path=str(path))


def split_labels(
    labels: Sequence[str],
    seed: int = 0,
    ratio: float = 0.5,
    fixed_split: Optional[Tuple[Sequence[str], Sequence[str]]] = None,
) -> Tuple[Tuple[str, ...], Tuple[str, ...]]:
    """
    Partition labels into Y_id and Y_ood

    Args:
        labels: All class names
        seed: Shuffle seed
        ratio: Fraction of labels assigned to Y_id
        fixed_split: Predefined (id, ood) partition, used as-is

    Returns:
        Tuple of (id labels, ood labels)
    """
    labels = list(labels)
    if fixed_split is not None:
        id_labels, ood_labels = tuple(fixed_split[0]), tuple(fixed_split[1])
        LabelSpace(id_labels, ood_labels)
        unknown = (set(id_labels) | set(ood_labels)) - set(labels)
        if unknown:
            raise LabelSpaceError(f"Split file names unknown labels: {sorted(unknown)[:5]}")
        return id_labels, ood_labels

    if len(labels) < 2:
        raise TooFewLabels(len(labels))
    if len(set(labels)) != len(labels):
        raise LabelSpaceError("Duplicate labels")
    if not 0 < ratio < 1:
        raise ConfigInvalid(f"Split ratio must be in (0, 1), got {ratio}")

    order = np.random.default_rng(seed).permutation(len(labels))
    n_id = min(max(int(round(len(labels) * ratio)), 1), len(labels) - 1)
    id_labels = tuple(labels[i] for i in sorted(order[:n_id]))
    ood_labels = tuple(labels[i] for i in sorted(order[n_id:]))
    return id_labels, ood_labels


@dataclass(frozen=True)
class FewshotDraw:
    """Seeded support set: up to `shots` samples per class"""

    shots: int
    seed: int
    selected: Dict[str, Tuple[str, ...]]
    excludes_support: bool = False

    @property
    def sample_ids(self) -> Tuple[str, ...]:
        return tuple(sid for label in self.selected for sid in self.selected[label])

    def samples(self, dataset: SplitDataset, split: str = "ood_eval") -> List[Sample]:
        lookup = {s.sample_id: s for s in dataset.split(split)}
        return [lookup[sid] for sid in self.sample_ids]

    def queries(self, dataset: SplitDataset, split: str = "ood_eval") -> List[Sample]:
        """Evaluation samples, without the support set when the draw excludes it"""
        support = set(self.sample_ids) if self.excludes_support else set()
        return [s for s in dataset.split(split) if s.sample_id not in support]


def draw_fewshot(
    dataset: SplitDataset,
    shots: int,
    seed: int = 0,
    split: str = "ood_eval",
    labels: Optional[Sequence[str]] = None,
    exclude_support: bool = True,
) -> FewshotDraw:
    """
    Draw a few-shot support set without replacement

    Args:
        dataset: Source dataset
        shots: Samples per class (clamped to what a class has)
        seed: Draw seed
        split: Split to draw from
        labels: Classes to draw for (default: the OOD labels)
        exclude_support: Whether evaluation should skip the support samples

    Returns:
        FewshotDraw
    """
    if shots < 1:
        raise ConfigInvalid(f"shots must be >= 1, got {shots}")
    groups = dataset.by_label(split)
    labels = list(labels) if labels is not None else list(dataset.label_space.ood_labels)
    rng = np.random.default_rng(seed)

    selected: Dict[str, Tuple[str, ...]] = {}
    for label in labels:
        pool = groups.get(label, [])
        if not pool:
            raise EmptyClass(label)
        picks = rng.choice(len(pool), size=min(shots, len(pool)), replace=False)
        selected[label] = tuple(pool[i].sample_id for i in sorted(picks))
    logger.debug(f"Drew {sum(len(v) for v in selected.values())} few-shot samples "
                 f"({shots} shots, {len(labels)} classes, seed {seed})")
    return FewshotDraw(shots=shots, seed=seed, selected=selected, excludes_support=exclude_support)
