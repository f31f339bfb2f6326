"""
Teacher providers for vl-distill
A deterministic synthetic teacher for desk-scale runs and a provider serving
features exported from a real vision-language model
"""

import hashlib
import re
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import Field

from src.core.embedding import FeatureKind, FeatureMatrix, ZERO_NORM_EPS
from src.core.errors import BadSpec, CacheCorrupt, InputMissing, MissingSample, MissingText
from src.enrichment.prompts import PLAIN_PROMPT
from src.persistence.feature_cache import cache_read, cache_write
from src.utils.config import ValidatedModel
from src.utils.logger import get_logger

logger = get_logger(__name__)

IMAGE_CACHE_NAME = "image_features.vlmd"
TEXT_CACHE_NAME = "text_features.vlmd"


class TeacherProvider(ABC):
    """Source of frozen teacher image and text features"""

    generator_id: str = ""

    @property
    @abstractmethod
    def embed_dim(self) -> int: ...

    @abstractmethod
    def image_features(self, sample_ids: Sequence[str]) -> FeatureMatrix: ...

    @abstractmethod
    def text_features(self, texts: Sequence[str]) -> FeatureMatrix: ...


def _unit_rows(data: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(data, axis=-1, keepdims=True)
    return data / np.maximum(norms, ZERO_NORM_EPS)


def _text_seed(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "little")


class SyntheticTeacherSpec(ValidatedModel):
    """Parameters of the synthetic teacher"""

    error_type = BadSpec

    seed: int = 0
    num_classes: int = Field(32, ge=2)
    embed_dim: int = Field(20, ge=2)
    dispersion: float = Field(1.0, gt=0)
    # per-coordinate std of the within-class image noise
    noise: float = Field(0.3, ge=0)
    text_offset: float = Field(0.35, ge=0)
    label_prefix: str = Field("class", pattern=r"^[A-Za-z]+$")


class SyntheticTeacher(TeacherProvider):
    """
    Class centers on the unit sphere; image features are noisy centers and the plain
    label prompt of a class maps exactly to its center
    """

    def __init__(self, spec: SyntheticTeacherSpec):
        self.spec = spec
        d = spec.embed_dim
        rng = np.random.default_rng([spec.seed, 0])
        mean_direction = _unit_rows(rng.standard_normal(d))
        spread = spec.dispersion * rng.standard_normal((spec.num_classes, d)) / np.sqrt(d)
        self.centers = _unit_rows(mean_direction + spread)
        self.centers.setflags(write=False)

        gaps = np.linalg.norm(self.centers[:, None, :] - self.centers[None, :, :], axis=-1)
        np.fill_diagonal(gaps, np.inf)
        if gaps.min() < 1e-9:
            raise BadSpec("Synthetic class centers are not pairwise distinct")

        self.labels: Tuple[str, ...] = tuple(self.label_name(c) for c in range(spec.num_classes))
        self._label_index = {label: c for c, label in enumerate(self.labels)}
        self._label_pattern = re.compile(rf"\b({spec.label_prefix}_\d{{3,}})\b")
        self.generator_id = f"synthetic:seed={spec.seed}:C={spec.num_classes}:D={d}:noise={spec.noise}"

    @property
    def embed_dim(self) -> int:
        return self.spec.embed_dim

    def label_name(self, c: int) -> str:
        return f"{self.spec.label_prefix}_{c:03d}"

    @staticmethod
    def sample_id(label: str, index: int) -> str:
        return f"{label}/{index:04d}"

    def _parse_sample_id(self, sample_id: str) -> Tuple[int, int]:
        label, _, index = sample_id.partition("/")
        if label not in self._label_index or not index.isdigit():
            raise MissingSample(sample_id)
        return self._label_index[label], int(index)

    def image_feature(self, sample_id: str) -> np.ndarray:
        c, i = self._parse_sample_id(sample_id)
        center = self.centers[c]
        if self.spec.noise == 0:
            return center.copy()
        rng = np.random.default_rng([self.spec.seed, 1, c, i])
        noise = self.spec.noise * rng.standard_normal(self.spec.embed_dim)
        return _unit_rows(center + noise)

    def image_features(self, sample_ids: Sequence[str]) -> FeatureMatrix:
        rows = np.stack([self.image_feature(sid) for sid in sample_ids])
        return FeatureMatrix(rows, tuple(sample_ids), FeatureKind.TEACHER_VISUAL)

    def text_feature(self, text: str) -> np.ndarray:
        match = self._label_pattern.search(text)
        if not match or match.group(1) not in self._label_index:
            raise MissingText(text)
        label = match.group(1)
        center = self.centers[self._label_index[label]]
        if text == PLAIN_PROMPT.format(label=label):
            return center.copy()
        # Any other wording moves the text feature by a deterministic, text-seeded offset
        rng = np.random.default_rng(_text_seed(text.replace(label, "{label}")))
        offset = self.spec.text_offset * rng.standard_normal(self.spec.embed_dim) / np.sqrt(self.spec.embed_dim)
        return _unit_rows(center + offset)

    def text_features(self, texts: Sequence[str]) -> FeatureMatrix:
        rows = np.stack([self.text_feature(t) for t in texts])
        return FeatureMatrix(rows, _text_ids(texts), FeatureKind.TEXT)

    def zero_shot_accuracy(self, sample_ids: Sequence[str]) -> float:
        """Fraction of samples whose image feature is closest to their own plain prompt"""
        images = self.image_features(sample_ids).data
        truth = np.array([self._parse_sample_id(sid)[0] for sid in sample_ids])
        return float(np.mean(np.argmax(images @ self.centers.T, axis=1) == truth))


def _text_ids(texts: Sequence[str]) -> Tuple[str, ...]:
    # texts may repeat (e.g. identical captions); ids must not
    seen: Dict[str, int] = {}
    ids = []
    for text in texts:
        count = seen.get(text, 0)
        seen[text] = count + 1
        ids.append(text if count == 0 else f"{text}#{count}")
    return tuple(ids)


def synthetic_teacher(spec: Optional[SyntheticTeacherSpec] = None, **overrides) -> SyntheticTeacher:
    """
    Build the synthetic teacher

    Args:
        spec: Teacher spec (defaults apply when omitted)
        **overrides: Spec fields to override

    Returns:
        SyntheticTeacher
    """
    if spec is None or overrides:
        base = spec.model_dump() if spec is not None else {}
        spec = SyntheticTeacherSpec.parse(base, **overrides)
    return SyntheticTeacher(spec)


class CachedTeacher(TeacherProvider):
    """Serves teacher features from an exported cache directory"""

    def __init__(self, cache_dir: str):
        """
        Load the cache pair

        Args:
            cache_dir: Directory with image_features.vlmd and text_features.vlmd
        """
        self.cache_dir = Path(cache_dir)
        if not self.cache_dir.is_dir():
            raise InputMissing(f"Teacher cache directory not found: {cache_dir}", path=str(cache_dir))

        images = cache_read(str(self.cache_dir / IMAGE_CACHE_NAME))
        texts = cache_read(str(self.cache_dir / TEXT_CACHE_NAME))
        if images.features.kind != FeatureKind.TEACHER_VISUAL or texts.features.kind != FeatureKind.TEXT:
            raise CacheCorrupt(f"{cache_dir}: unexpected feature kinds in teacher cache", path=str(cache_dir))
        if images.features.dim != texts.features.dim:
            raise CacheCorrupt(f"{cache_dir}: image and text caches have different widths", path=str(cache_dir))

        self._images = images.features
        self._image_rows = {sid: i for i, sid in enumerate(self._images.ids)}
        text_strings = texts.texts if texts.texts is not None else list(texts.features.ids)
        self._texts = texts.features
        self._text_rows = {text: i for i, text in enumerate(text_strings)}
        self.generator_id = images.generator_id or texts.generator_id
        logger.info(f"Loaded teacher cache {cache_dir}: {self._images.rows} images, "
                    f"{self._texts.rows} texts, D={self.embed_dim}")

    @property
    def embed_dim(self) -> int:
        return self._images.dim

    @property
    def sample_ids(self) -> Tuple[str, ...]:
        return self._images.ids

    @property
    def texts(self) -> List[str]:
        return list(self._text_rows)

    def image_features(self, sample_ids: Sequence[str]) -> FeatureMatrix:
        rows = []
        for sid in sample_ids:
            if sid not in self._image_rows:
                raise MissingSample(sid)
            rows.append(self._image_rows[sid])
        return FeatureMatrix(self._images.data[rows], tuple(sample_ids), FeatureKind.TEACHER_VISUAL)

    def text_features(self, texts: Sequence[str]) -> FeatureMatrix:
        rows = []
        for text in texts:
            if text not in self._text_rows:
                raise MissingText(text)
            rows.append(self._text_rows[text])
        return FeatureMatrix(self._texts.data[rows], _text_ids(texts), FeatureKind.TEXT)


def cached_teacher(cache_path: str) -> CachedTeacher:
    return CachedTeacher(cache_path)


def export_teacher_cache(
    teacher: TeacherProvider,
    sample_ids: Sequence[str],
    texts: Sequence[str],
    cache_dir: str,
    meta: Optional[Dict] = None,
) -> Path:
    """
    Write a provider's features for the given samples and texts as a cache pair

    Args:
        teacher: Any teacher provider
        sample_ids: Samples to export
        texts: Texts to export (duplicates are written once)
        cache_dir: Output directory
        meta: Extra metadata stored in both trailers

    Returns:
        The cache directory
    """
    out = Path(cache_dir)
    unique_texts = list(dict.fromkeys(texts))
    cache_write(str(out / IMAGE_CACHE_NAME), teacher.image_features(sample_ids),
                generator_id=teacher.generator_id, meta=meta)
    cache_write(str(out / TEXT_CACHE_NAME), teacher.text_features(unique_texts), texts=unique_texts,
                generator_id=teacher.generator_id, meta=meta)
    logger.info(f"Exported {len(sample_ids)} image and {len(unique_texts)} text features to {out}")
    return out
