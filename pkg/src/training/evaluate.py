"""
Evaluation for vl-distill
Zero-shot accuracy on a split restricted to a label set, optional alignment metrics,
and last-epoch averaging
"""

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from src.core.embedding import DEFAULT_TAU, FeatureMatrix, classify, labels_to_indices, stable_argmax
from src.core.errors import UnknownSplit
from src.data.manifest import stack_inputs
from src.data.splits import SPLIT_NAMES, Sample, SplitDataset
from src.metrics.alignment import MetricReport, alignment_reports
from src.training.student import StudentModel
from src.utils.logger import get_logger

logger = get_logger(__name__)

SPLIT_TAGS = {"train": "train", "id_eval": "id", "ood_eval": "ood"}

StudentLike = Union[StudentModel, FeatureMatrix]


@dataclass
class EvalResult:
    """Top-1 accuracy on one split plus any metric reports"""

    split: str
    accuracy: float
    count: int
    reports: List[MetricReport] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {"split": self.split, "accuracy": self.accuracy, "count": self.count,
                "reports": [r.to_dict() for r in self.reports]}


def student_features(student: StudentLike, samples: Sequence[Sample],
                     input_loader: Optional[Callable] = None) -> FeatureMatrix:
    """Student features for samples, from a model or from a precomputed matrix"""
    ids = [s.sample_id for s in samples]
    if isinstance(student, FeatureMatrix):
        return student.select(ids)
    return student.features(stack_inputs(samples, input_loader), ids)


def evaluate(
    student: StudentLike,
    teacher,
    dataset: SplitDataset,
    split: str,
    label_set: Optional[Sequence[str]] = None,
    text: Optional[FeatureMatrix] = None,
    samples: Optional[Sequence[Sample]] = None,
    tau: float = DEFAULT_TAU,
    with_metrics: bool = False,
    k_neigh: Sequence[int] = (5,),
    k_vlalign: Sequence[int] = (5,),
    input_loader: Optional[Callable] = None,
) -> EvalResult:
    """
    Top-1 zero-shot accuracy on a split, classifying only among label_set

    Args:
        student: Student model or precomputed student feature matrix
        teacher: Teacher provider (image features for the metrics)
        dataset: Dataset holding the split
        split: train, id_eval or ood_eval
        label_set: Candidate labels (default: Y_id for train/id_eval, Y_ood for ood_eval)
        text: Text features for label_set (default: from the label space)
        samples: Subset of the split to evaluate (e.g. queries without the support set)
        tau: Classification temperature
        with_metrics: Attach M_rel / M_neigh / M_vlalign reports
        k_neigh: Neighbourhood sizes for M_neigh
        k_vlalign: Ordering sizes for M_vlalign
        input_loader: Loader for samples without precomputed inputs

    Returns:
        EvalResult
    """
    if split not in SPLIT_NAMES:
        raise UnknownSplit(split)
    space = dataset.label_space
    if label_set is None:
        label_set = space.ood_labels if split == "ood_eval" else space.id_labels
    label_set = list(label_set)
    keep = set(label_set)
    chosen = [s for s in (samples if samples is not None else dataset.split(split)) if s.label in keep]
    if not chosen:
        return EvalResult(split, 0.0, 0)

    text = text.select(label_set) if text is not None else space.text_matrix(label_set)
    feats = student_features(student, chosen, input_loader)
    predicted = stable_argmax(classify(feats, text, tau), axis=1)
    truth = labels_to_indices([s.label for s in chosen], label_set)
    accuracy = float(np.mean(predicted == truth))

    reports: List[MetricReport] = []
    if with_metrics:
        teacher_feats = teacher.image_features([s.sample_id for s in chosen])
        reports = alignment_reports(feats, teacher_feats, SPLIT_TAGS[split], text,
                                    k_neigh=tuple(k_neigh), k_vlalign=tuple(k_vlalign))
    logger.debug(f"evaluate split={split} labels={len(label_set)} n={len(chosen)} acc={accuracy:.4f}")
    return EvalResult(split, accuracy, len(chosen), reports)


def average_last(values: Sequence[float], n: int = 5) -> float:
    """Mean of the last n values (all of them when fewer are logged)"""
    if not values:
        raise ValueError("No values to average")
    tail = list(values)[-n:]
    return float(np.mean(tail))
