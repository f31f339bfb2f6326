"""
Image captions for vl-distill
Caption sets used only by the caption-contrast training loss
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from tqdm import tqdm

from src.core.embedding import FeatureKind, FeatureMatrix
from src.core.errors import CacheConflict, CacheCorrupt, EmptyGeneration, MissingCaptions
from src.utils.logger import get_logger

logger = get_logger(__name__)


@dataclass
class CaptionSet:
    """At most one caption per sample, plus resolved caption text features"""

    captions: Dict[str, str] = field(default_factory=dict)
    features: Dict[str, np.ndarray] = field(default_factory=dict)
    generator_id: Optional[str] = None

    def __contains__(self, sample_id: str) -> bool:
        return sample_id in self.captions

    def __len__(self) -> int:
        return len(self.captions)

    def add(self, sample_id: str, caption: str):
        existing = self.captions.get(sample_id)
        if existing is not None and existing != caption:
            raise CacheConflict(f"Sample '{sample_id}' already has a different caption", sample_id=sample_id)
        self.captions[sample_id] = caption

    def resolve_features(self, teacher) -> "CaptionSet":
        """Look up the teacher text feature of every caption"""
        pending = [sid for sid in self.captions if sid not in self.features]
        if pending:
            matrix = teacher.text_features([self.captions[sid] for sid in pending])
            for sid, row in zip(pending, matrix.data):
                self.features[sid] = row
        return self

    def feature_matrix(self, sample_ids: Sequence[str]) -> FeatureMatrix:
        """
        Caption features for the given samples, row i = cap(x_i)

        Args:
            sample_ids: Samples in batch order

        Returns:
            FeatureMatrix of caption text features
        """
        missing = [sid for sid in sample_ids if sid not in self.features]
        if missing:
            raise MissingCaptions(f"{len(missing)} samples lack caption features (first: {missing[0]})",
                                  sample_id=missing[0])
        return FeatureMatrix(np.stack([self.features[sid] for sid in sample_ids]),
                             tuple(f"cap:{sid}" for sid in sample_ids), FeatureKind.TEXT)

    def save(self, path: str):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            for sample_id in sorted(self.captions):
                record = {"sample_id": sample_id, "caption": self.captions[sample_id],
                          "generator_id": self.generator_id}
                f.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str) -> "CaptionSet":
        caption_set = cls()
        with open(path, "r", encoding="utf-8") as f:
            for line_number, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                    caption_set.add(record["sample_id"], record["caption"])
                except (json.JSONDecodeError, KeyError) as e:
                    raise CacheCorrupt(f"Bad caption record at {path}:{line_number}: {e}")
                caption_set.generator_id = record.get("generator_id", caption_set.generator_id)
        return caption_set


def generate_captions(
    samples: Iterable,
    captioner,
    caption_set: Optional[CaptionSet] = None,
    workers: int = 4,
    progress: bool = False,
    save_path: Optional[str] = None,
) -> CaptionSet:
    """
    Caption every sample that has no caption yet

    A failed or empty caption does not discard the others: every valid caption is
    added (and saved when save_path is given) before EmptyGeneration is raised.

    Args:
        samples: Objects with sample_id and image_ref attributes
        captioner: Client with caption(sample_id, image_ref) and client_id
        caption_set: Existing captions to extend (modified in place)
        workers: Concurrent captioner calls
        progress: Show a progress bar
        save_path: JSONL file the caption set is written to after this batch

    Returns:
        The caption set
    """
    caption_set = caption_set if caption_set is not None else CaptionSet()
    caption_set.generator_id = caption_set.generator_id or captioner.client_id
    pending: List = [s for s in samples if s.sample_id not in caption_set]
    logger.info(f"Captioning {len(pending)} samples with {captioner.client_id}")

    errors: Dict[str, Exception] = {}

    def caption_one(sample) -> str:
        try:
            return (captioner.caption(sample.sample_id, sample.image_ref) or "").strip()
        except Exception as e:
            logger.warning(f"Captioning {sample.sample_id} failed: {e}")
            errors[sample.sample_id] = e
            return ""

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        captions = list(tqdm(pool.map(caption_one, pending), total=len(pending), desc="caption",
                             disable=not progress or not pending))
    failed = []
    for sample, caption in zip(pending, captions):
        if caption:
            caption_set.add(sample.sample_id, caption)
        else:
            failed.append(sample.sample_id)

    if save_path:
        caption_set.save(save_path)
    if failed:
        logger.error(f"{len(failed)} of {len(pending)} samples got no caption")
        cause = next((errors[sid] for sid in failed if sid in errors), None)
        raise EmptyGeneration(", ".join(failed), what="caption") from cause
    return caption_set
