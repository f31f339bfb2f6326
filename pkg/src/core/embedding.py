"""
Embedding core for the vl-distill toolkit
Feature matrices, label spaces, distances and the zero-shot classification rule
shared by every loss and metric
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
from pydantic import Field
from scipy.spatial.distance import cdist
from scipy.special import softmax

from src.core.errors import (
    DimMismatch,
    IdMismatch,
    LabelSpaceError,
    MissingText,
    NonPositiveTemperature,
    ShapeMismatch,
    ZeroRow,
)
from src.utils.config import ValidatedModel

ZERO_NORM_EPS = 1e-12
DEFAULT_TAU = 0.01
DEFAULT_K_VLPROX = 256
LOSS_NAMES = ("cls", "mse", "im_cst", "vlprox", "cap")


class FeatureKind(str, Enum):
    """Provenance tag of a feature matrix"""

    STUDENT_VISUAL = "student_visual"
    TEACHER_VISUAL = "teacher_visual"
    TEXT = "text"

    @property
    def code(self) -> int:
        return _KIND_CODES[self]

    @classmethod
    def from_code(cls, code: int) -> "FeatureKind":
        for kind, value in _KIND_CODES.items():
            if value == code:
                return kind
        raise ValueError(f"Unknown feature kind code: {code}")


_KIND_CODES = {
    FeatureKind.STUDENT_VISUAL: 0,
    FeatureKind.TEACHER_VISUAL: 1,
    FeatureKind.TEXT: 2,
}


@dataclass(frozen=True)
class FeatureMatrix:
    """N x D embedding rows with one opaque identifier per row"""

    data: np.ndarray
    ids: Tuple[str, ...]
    kind: FeatureKind = FeatureKind.STUDENT_VISUAL

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64, copy=True)
        if data.ndim != 2:
            raise ShapeMismatch(f"Feature data must be 2-D, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ShapeMismatch(f"Feature matrix needs N >= 1 and D >= 1, got {data.shape}")
        ids = tuple(str(i) for i in self.ids)
        if len(ids) != data.shape[0]:
            raise ShapeMismatch(f"{len(ids)} ids for {data.shape[0]} rows")
        if len(set(ids)) != len(ids):
            raise IdMismatch("Feature matrix ids must be unique")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "kind", FeatureKind(self.kind))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def index_of(self, sample_id: str) -> int:
        try:
            return self.ids.index(sample_id)
        except ValueError:
            raise IdMismatch(f"Id '{sample_id}' not in matrix", sample_id=sample_id)

    def select(self, ids: Sequence[str]) -> "FeatureMatrix":
        """Rows for the given ids, in the given order"""
        lookup = {sample_id: i for i, sample_id in enumerate(self.ids)}
        missing = [i for i in ids if i not in lookup]
        if missing:
            raise IdMismatch(f"{len(missing)} ids not in matrix (first: {missing[0]})", missing=missing[0])
        index = [lookup[i] for i in ids]
        return FeatureMatrix(self.data[index], tuple(ids), self.kind)

    def with_data(self, data: np.ndarray, kind: Optional[FeatureKind] = None) -> "FeatureMatrix":
        return FeatureMatrix(data, self.ids, kind or self.kind)

    @classmethod
    def from_rows(cls, rows: Dict[str, np.ndarray], kind: FeatureKind) -> "FeatureMatrix":
        ids = list(rows.keys())
        return cls(np.stack([np.asarray(rows[i], dtype=np.float64) for i in ids]), tuple(ids), kind)


@dataclass
class LabelSpace:
    """Disjoint in-distribution and out-of-distribution label sets"""

    id_labels: Tuple[str, ...]
    ood_labels: Tuple[str, ...]
    descriptions: Dict[str, Dict[str, str]] = field(default_factory=dict)
    text_features: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.id_labels = tuple(self.id_labels)
        self.ood_labels = tuple(self.ood_labels)
        overlap = set(self.id_labels) & set(self.ood_labels)
        if overlap:
            raise LabelSpaceError(f"Labels in both ID and OOD sets: {sorted(overlap)}")
        for labels in (self.id_labels, self.ood_labels):
            if len(set(labels)) != len(labels):
                raise LabelSpaceError("Duplicate label inside a label set")

    @property
    def all_labels(self) -> Tuple[str, ...]:
        return self.id_labels + self.ood_labels

    def split_of(self, label: str) -> str:
        if label in self.id_labels:
            return "id"
        if label in self.ood_labels:
            return "ood"
        raise LabelSpaceError(f"Label '{label}' is in neither label set", label=label)

    def check_labels(self, labels: Iterable[str]):
        """Every referenced label must exist in exactly one of the two sets"""
        for label in labels:
            self.split_of(label)

    def text_matrix(self, labels: Optional[Sequence[str]] = None) -> FeatureMatrix:
        """Resolved text features for the given labels (default: all labels)"""
        labels = list(labels) if labels is not None else list(self.all_labels)
        rows = []
        for label in labels:
            if label not in self.text_features:
                raise MissingText(label)
            rows.append(self.text_features[label])
        return FeatureMatrix(np.stack(rows), tuple(labels), FeatureKind.TEXT)


class LossConfig(ValidatedModel):
    """Temperatures, k and per-loss weights shared by the losses"""

    tau_cls: float = Field(DEFAULT_TAU, gt=0)
    tau_imcst: float = Field(DEFAULT_TAU, gt=0)
    tau_cap: float = Field(DEFAULT_TAU, gt=0)
    # unset: vlprox shares tau_cls
    tau_vlprox: Optional[float] = Field(None, gt=0)
    k_vlprox: int = Field(DEFAULT_K_VLPROX, ge=1)
    filter_vlprox: bool = True
    filter_im_cst: bool = False
    weights: Dict[str, float] = Field(default_factory=lambda: {name: 1.0 for name in LOSS_NAMES})

    def weight(self, name: str) -> float:
        return self.weights.get(name, 1.0)

    @property
    def vlprox_tau(self) -> float:
        return self.tau_cls if self.tau_vlprox is None else self.tau_vlprox


def normalize(m: FeatureMatrix) -> FeatureMatrix:
    """
    Divide every row by its L2 norm

    Args:
        m: Feature matrix

    Returns:
        Matrix with unit-norm rows (idempotent)
    """
    norms = np.linalg.norm(m.data, axis=1)
    bad = np.flatnonzero(norms < ZERO_NORM_EPS)
    if bad.size:
        raise ZeroRow(int(bad[0]))
    return m.with_data(m.data / norms[:, None])


def squared_l2(a: np.ndarray, b: np.ndarray) -> float:
    """||a - b||^2 for two vectors; equals 2 - 2 cos(a, b) for unit-norm inputs"""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimMismatch(a.shape, b.shape, what="vector shape")
    diff = a - b
    return float(diff @ diff)


def pairwise_squared_l2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """All-pairs squared L2 distances between rows of a and rows of b"""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[1] != b.shape[1]:
        raise DimMismatch(a.shape[1], b.shape[1])
    return cdist(a, b, metric="sqeuclidean")


def cosine_from_squared_l2(sq: np.ndarray) -> np.ndarray:
    # cos(a, b) = 1 - ||a - b||^2 / 2 on the unit sphere
    return 1.0 - np.asarray(sq) / 2.0


def cosine_matrix(a: FeatureMatrix, b: FeatureMatrix) -> np.ndarray:
    if a.dim != b.dim:
        raise DimMismatch(a.dim, b.dim)
    return cosine_from_squared_l2(pairwise_squared_l2(a.data, b.data))


def check_temperature(tau: float):
    if not tau > 0:
        raise NonPositiveTemperature(tau)


def classify(student: FeatureMatrix, text: FeatureMatrix, tau: float = DEFAULT_TAU) -> np.ndarray:
    """
    Zero-shot label distribution for every student row

    Args:
        student: N x D student features
        text: C x D label text features
        tau: Softmax temperature

    Returns:
        N x C probability matrix, row i = softmax_y(cos(S_i, T_y) / tau)
    """
    check_temperature(tau)
    logits = cosine_matrix(student, text) / tau
    return softmax(logits, axis=1)


def stable_argmax(values: np.ndarray, axis: int = -1) -> np.ndarray:
    # np.argmax returns the first occurrence, so ties resolve to the lowest index
    return np.argmax(values, axis=axis)


def stable_topk(values: np.ndarray, k: int, largest: bool = True) -> np.ndarray:
    """Indices of the k best entries per row, best first, ties to the lowest index"""
    keys = -values if largest else values
    return np.argsort(keys, axis=-1, kind="stable")[..., :k]


def labels_to_indices(labels: Sequence[str], label_order: Sequence[str]) -> np.ndarray:
    lookup = {label: i for i, label in enumerate(label_order)}
    try:
        return np.array([lookup[label] for label in labels], dtype=np.int64)
    except KeyError as e:
        raise LabelSpaceError(f"Label {e.args[0]!r} not in label order", label=e.args[0])


def check_same_ids(a: FeatureMatrix, b: FeatureMatrix):
    if a.rows != b.rows:
        raise IdMismatch(f"Row counts differ: {a.rows} vs {b.rows}")
    if a.ids != b.ids:
        raise IdMismatch("Matrices are not aligned on ids")
    if a.dim != b.dim:
        raise DimMismatch(a.dim, b.dim)
