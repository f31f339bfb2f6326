"""
Manifest-backed datasets for vl-distill
Tab-separated sample manifests, split-size validation for the benchmark datasets
and image loading for student inputs
"""

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from src.core.embedding import LabelSpace
from src.core.errors import ConfigInvalid, InputMissing, ShapeMismatch
from src.data.splits import Sample, SplitDataset
from src.utils.logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class DatasetStats:
    """Published split sizes: |X_train|, |X_id|, |X_ood|, |Y_id|, |Y_ood|"""

    train: int
    id_eval: int
    ood_eval: int
    id_labels: int
    ood_labels: int

    def as_counts(self) -> Dict[str, int]:
        return {"train": self.train, "id_eval": self.id_eval, "ood_eval": self.ood_eval,
                "id_labels": self.id_labels, "ood_labels": self.ood_labels}


DATASET_STATS: Dict[str, DatasetStats] = {
    "CaltechBirds": DatasetStats(4122, 1740, 5926, 100, 100),
    "StanfordCars": DatasetStats(2874, 1164, 4106, 98, 98),
    "Flower102": DatasetStats(3112, 1303, 3774, 51, 51),
    "Food101": DatasetStats(35700, 15300, 50000, 51, 50),
    "SUN397": DatasetStats(38663, 16444, 53647, 200, 197),
    "tiered-ImageNet": DatasetStats(314108, 134587, 124261, 351, 97),
}


def read_manifest(path: str) -> List[Sample]:
    """
    Read a manifest: sample-id, path-or-cache-ref, label and optional caption-id per line

    Args:
        path: UTF-8 tab-separated file; blank lines and '#' comments are skipped

    Returns:
        Samples in file order
    """
    source = Path(path)
    if not source.is_file():
        raise InputMissing(f"Manifest not found: {path}", path=str(path))

    samples = []
    with open(source, "r", encoding="utf-8", newline="") as f:
        for line_number, row in enumerate(csv.reader(f, delimiter="\t"), start=1):
            if not row or row[0].startswith("#"):
                continue
            if len(row) not in (3, 4):
                raise ConfigInvalid(f"{path}:{line_number}: expected 3 or 4 tab-separated fields, got {len(row)}")
            sample_id, ref, label = row[0], row[1], row[2]
            caption_ref = row[3] if len(row) == 4 and row[3] else None
            samples.append(Sample(sample_id, label, image_ref=ref or None, caption_ref=caption_ref))
    logger.debug(f"Read {len(samples)} samples from {path}")
    return samples


def manifest_dataset(
    train_manifest: str,
    id_manifest: str,
    ood_manifest: str,
    name: str = "dataset",
    id_labels: Optional[Sequence[str]] = None,
    ood_labels: Optional[Sequence[str]] = None,
) -> SplitDataset:
    """
    Assemble a SplitDataset from three manifests

    Label sets default to the labels seen in the manifests (train + id for Y_id,
    ood for Y_ood) in first-seen order.
    """
    train = read_manifest(train_manifest)
    id_eval = read_manifest(id_manifest)
    ood_eval = read_manifest(ood_manifest)
    if id_labels is None:
        id_labels = list(dict.fromkeys(s.label for s in train + id_eval))
    if ood_labels is None:
        ood_labels = list(dict.fromkeys(s.label for s in ood_eval))
    dataset = SplitDataset(tuple(train), tuple(id_eval), tuple(ood_eval), LabelSpace(id_labels, ood_labels), name)
    if name in DATASET_STATS:
        check_split_sizes(dataset, name)
    return dataset


def check_split_sizes(dataset: SplitDataset, name: str):
    """Compare a dataset's split sizes with the published table"""
    expected = DATASET_STATS[name].as_counts()
    found = dataset.counts()
    diffs = {key: (expected[key], found[key]) for key in expected if expected[key] != found[key]}
    if diffs:
        raise ShapeMismatch(f"{name} split sizes differ from the published table: {diffs}", dataset=name)


class ImageInputLoader:
    """Loads sample images as flat float vectors (requires Pillow)"""

    def __init__(self, root: str = ".", size: int = 32, transform: Optional[Callable] = None):
        """
        Args:
            root: Directory image refs are relative to
            size: Square resize edge
            transform: Optional hook applied to each PIL image (augmentation)
        """
        self.root = Path(root)
        self.size = size
        self.transform = transform

    def load(self, sample: Sample) -> np.ndarray:
        from PIL import Image

        if not sample.image_ref:
            raise InputMissing(f"Sample '{sample.sample_id}' has no image reference", sample_id=sample.sample_id)
        path = self.root / sample.image_ref
        if not path.is_file():
            raise InputMissing(f"Image not found: {path}", path=str(path))
        with Image.open(path) as image:
            image = image.convert("RGB").resize((self.size, self.size))
            if self.transform is not None:
                image = self.transform(image)
            return np.asarray(image, dtype=np.float64).reshape(-1) / 255.0

    def __call__(self, samples: Sequence[Sample]) -> np.ndarray:
        return np.stack([self.load(s) for s in samples])


def stack_inputs(samples: Sequence[Sample], loader: Optional[Callable] = None) -> np.ndarray:
    """
    Student input matrix for a list of samples

    Args:
        samples: Samples in batch order
        loader: Fallback for samples without precomputed inputs

    Returns:
        N x input_dim float64 matrix
    """
    if all(s.inputs is not None for s in samples):
        return np.stack([np.asarray(s.inputs, dtype=np.float64) for s in samples])
    if loader is None:
        missing = next(s for s in samples if s.inputs is None)
        raise InputMissing(f"Sample '{missing.sample_id}' has no student input and no loader is configured",
                           sample_id=missing.sample_id)
    return np.asarray(loader(samples), dtype=np.float64)
