"""
Alignment Metrics for vl-distill
Measures how well a student's visual space preserves the teacher's visual structure
and the teacher's vision-language ordering
"""

from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Tuple

import numpy as np

from src.core.embedding import (
    FeatureMatrix,
    check_same_ids,
    cosine_from_squared_l2,
    pairwise_squared_l2,
    stable_topk,
)
from src.core.errors import DimMismatch, KOutOfRange
from src.utils.logger import get_logger

logger = get_logger(__name__)

# Above this many query rows, distances are computed block by block
DENSE_ROW_LIMIT = 4096
BLOCK_ROWS = 1024


@dataclass
class MetricReport:
    """One evaluated metric on one split"""

    metric: str
    dataset: str
    value: float
    count: int
    params: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MetricReport":
        return cls(
            metric=data["metric"],
            dataset=data["dataset"],
            value=float(data["value"]),
            count=int(data["count"]),
            params=dict(data.get("params", {})),
        )


def _row_blocks(rows: int, dense_limit: int = DENSE_ROW_LIMIT, block_rows: int = BLOCK_ROWS) -> Iterator[slice]:
    if rows <= dense_limit:
        yield slice(0, rows)
        return
    for start in range(0, rows, block_rows):
        yield slice(start, min(start + block_rows, rows))


def metric_rel(student: FeatureMatrix, teacher: FeatureMatrix, dense_limit: int = DENSE_ROW_LIMIT) -> float:
    """
    Fraction of samples whose student feature is nearest to their own teacher feature

    Args:
        student: N x D student features
        teacher: N x D teacher image features, same ids in the same order
        dense_limit: Largest N handled as one dense distance matrix

    Returns:
        Value in [0, 1]
    """
    check_same_ids(student, teacher)
    hits = 0
    for block in _row_blocks(student.rows, dense_limit):
        dist = pairwise_squared_l2(student.data[block], teacher.data)
        nearest = np.argmin(dist, axis=1)
        hits += int(np.sum(nearest == np.arange(block.start, block.stop)))
    return hits / student.rows


def _knn_excluding_self(data: np.ndarray, block: slice, k: int) -> np.ndarray:
    dist = pairwise_squared_l2(data[block], data)
    rows = np.arange(block.stop - block.start)
    dist[rows, rows + block.start] = np.inf
    return stable_topk(dist, k, largest=False)


def metric_neigh(student: FeatureMatrix, teacher: FeatureMatrix, k: int, dense_limit: int = DENSE_ROW_LIMIT) -> float:
    """
    Mean overlap of the k nearest neighbours of each sample in student and teacher space

    Args:
        student: N x D student features
        teacher: N x D teacher image features, same ids in the same order
        k: Neighbourhood size, 1 <= k <= N - 1 (the sample itself is never a neighbour)
        dense_limit: Largest N handled as one dense distance matrix

    Returns:
        Value in [0, 1]
    """
    check_same_ids(student, teacher)
    n = student.rows
    if not 1 <= k <= n - 1:
        raise KOutOfRange(k, 1, n - 1)

    overlap = 0
    for block in _row_blocks(n, dense_limit):
        knn_s = _knn_excluding_self(student.data, block, k)
        knn_t = _knn_excluding_self(teacher.data, block, k)
        for a, b in zip(knn_s, knn_t):
            overlap += np.intersect1d(a, b, assume_unique=True).size
    return overlap / (n * k)


def count_inversions(values: np.ndarray) -> np.ndarray:
    """Pairs p < q with values[..., p] > values[..., q], counted along the last axis"""
    values = np.asarray(values)
    greater = values[..., :, None] > values[..., None, :]
    upper = np.triu(np.ones(greater.shape[-2:], dtype=bool), k=1)
    return np.sum(greater & upper, axis=(-2, -1))


def metric_vlalign(
    student: FeatureMatrix,
    teacher_img: FeatureMatrix,
    text: FeatureMatrix,
    k: int,
    dense_limit: int = DENSE_ROW_LIMIT,
) -> float:
    """
    Mean number of reversed pairs between the teacher's and the student's ordering of
    the teacher's k nearest label texts

    Args:
        student: N x D student features
        teacher_img: N x D teacher image features
        text: C x D label text features
        k: Number of teacher-nearest texts, 1 <= k <= C
        dense_limit: Largest N handled in one block

    Returns:
        Mean inversion count, between 0 and k(k-1)/2 (lower is better)
    """
    check_same_ids(student, teacher_img)
    if student.dim != text.dim:
        raise DimMismatch(student.dim, text.dim)
    if not 1 <= k <= text.rows:
        raise KOutOfRange(k, 1, text.rows)

    total = 0
    for block in _row_blocks(student.rows, dense_limit):
        order = stable_topk(pairwise_squared_l2(teacher_img.data[block], text.data), k, largest=False)
        student_dist = pairwise_squared_l2(student.data[block], text.data)
        arranged = np.take_along_axis(student_dist, order, axis=1)
        total += int(count_inversions(arranged).sum())
    return total / student.rows


def mse_angle_stats(student: FeatureMatrix, teacher: FeatureMatrix) -> Tuple[float, float]:
    """
    Mean squared error and mean angle (degrees) between paired student and teacher rows

    Args:
        student: N x D unit-norm student features
        teacher: N x D unit-norm teacher features, same ids

    Returns:
        Tuple of (mean squared error, mean angle in degrees)
    """
    check_same_ids(student, teacher)
    diff = student.data - teacher.data
    sq = np.einsum("ij,ij->i", diff, diff)
    angles = np.degrees(np.arccos(np.clip(cosine_from_squared_l2(sq), -1.0, 1.0)))
    return float(sq.mean()), float(angles.mean())


def alignment_reports(
    student: FeatureMatrix,
    teacher: FeatureMatrix,
    dataset: str,
    text: Optional[FeatureMatrix] = None,
    k_neigh: Tuple[int, ...] = (5,),
    k_vlalign: Tuple[int, ...] = (5,),
) -> List[MetricReport]:
    """
    Evaluate every applicable alignment metric on one split

    Neighbourhood and ordering sizes outside their valid range for this split are skipped.

    Args:
        student: Student features
        teacher: Teacher image features for the same samples
        dataset: Split tag (train / id / ood)
        text: Label text features; M_vlalign is skipped without them
        k_neigh: Neighbourhood sizes for M_neigh
        k_vlalign: Ordering sizes for M_vlalign

    Returns:
        List of MetricReport
    """
    n = student.rows
    reports = [MetricReport("M_rel", dataset, metric_rel(student, teacher), n)]
    for k in k_neigh:
        if 1 <= k <= n - 1:
            reports.append(MetricReport("M_neigh", dataset, metric_neigh(student, teacher, k), n, {"k": k}))
        else:
            logger.warning(f"Skipping M_neigh k={k} on {dataset}: only {n} samples")
    if text is not None:
        for k in k_vlalign:
            if 1 <= k <= text.rows:
                value = metric_vlalign(student, teacher, text, k)
                reports.append(MetricReport("M_vlalign", dataset, value, n, {"k": k}))
            else:
                logger.warning(f"Skipping M_vlalign k={k} on {dataset}: only {text.rows} labels")
    mse, angle = mse_angle_stats(student, teacher)
    reports.append(MetricReport("mse", dataset, mse, n))
    reports.append(MetricReport("angle_deg", dataset, angle, n))
    return reports
