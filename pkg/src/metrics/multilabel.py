"""
Multi-label metrics for vl-distill
Overall accuracy, per-label precision/recall/F1 over present objects, and the
positive/negative prompt prediction rule with a common probability bias
"""

from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.special import expit

from src.core.embedding import FeatureMatrix, check_temperature, cosine_matrix
from src.core.errors import DimMismatch, ShapeMismatch

DEFAULT_BIAS_GRID = tuple(np.round(np.linspace(-0.45, 0.45, 19), 2))


@dataclass
class MultilabelScores:
    """M1 accuracy and M2 precision / recall / F1"""

    accuracy: float
    precision: float
    recall: float
    f1: float
    precision_per_label: np.ndarray
    recall_per_label: np.ndarray

    def to_dict(self) -> Dict[str, float]:
        return {
            "m1_accuracy": self.accuracy,
            "m2_precision": self.precision,
            "m2_recall": self.recall,
            "m2_f1": self.f1,
        }


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    # a label with an empty denominator contributes 0
    out = np.zeros_like(num, dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


def multilabel_metrics(predictions: np.ndarray, truth: np.ndarray, present_only: bool = False) -> MultilabelScores:
    """
    Score boolean multi-label predictions

    Args:
        predictions: N x L predicted presence
        truth: N x L true presence
        present_only: Average precision/recall only over labels that occur in truth

    Returns:
        MultilabelScores
    """
    pred = np.asarray(predictions, dtype=bool)
    true = np.asarray(truth, dtype=bool)
    if pred.shape != true.shape or pred.ndim != 2:
        raise ShapeMismatch(f"Prediction shape {pred.shape} does not match truth shape {true.shape}")

    correct = pred == true
    accuracy = float(correct.mean())

    hits = np.sum(true & correct, axis=0)
    union = np.sum(true | pred, axis=0)
    positives = np.sum(true, axis=0)
    precision_per_label = _safe_ratio(hits, union)
    recall_per_label = _safe_ratio(hits, positives)

    labels = positives > 0 if present_only else np.ones(true.shape[1], dtype=bool)
    if not labels.any():
        precision = recall = 0.0
    else:
        precision = float(precision_per_label[labels].mean())
        recall = float(recall_per_label[labels].mean())
    f1 = 0.0 if precision == 0.0 or recall == 0.0 else 2.0 / (1.0 / precision + 1.0 / recall)

    return MultilabelScores(accuracy, precision, recall, f1, precision_per_label, recall_per_label)


def positive_probability(student: FeatureMatrix, pos_text: FeatureMatrix, neg_text: FeatureMatrix, tau: float) -> np.ndarray:
    """Two-way softmax over (positive prompt, negative prompt) for every sample and label"""
    check_temperature(tau)
    if pos_text.rows != neg_text.rows:
        raise ShapeMismatch(f"{pos_text.rows} positive prompts vs {neg_text.rows} negative prompts")
    if student.dim != pos_text.dim or student.dim != neg_text.dim:
        raise DimMismatch(student.dim, pos_text.dim if student.dim != pos_text.dim else neg_text.dim)
    margin = (cosine_matrix(student, pos_text) - cosine_matrix(student, neg_text)) / tau
    return expit(margin)


def multilabel_predict(
    student: FeatureMatrix,
    pos_text: FeatureMatrix,
    neg_text: FeatureMatrix,
    tau: float,
    bias: float = 0.0,
) -> np.ndarray:
    """
    Predict label presence from positive and negative prompt features

    Args:
        student: N x D student features
        pos_text: L x D positive prompt features, one per label
        neg_text: L x D negative prompt features, one per label
        tau: Temperature
        bias: Common probability bias

    Returns:
        N x L booleans, True where P_pos > 0.5 + bias
    """
    return positive_probability(student, pos_text, neg_text, tau) > 0.5 + bias


def calibrate_bias(
    student: FeatureMatrix,
    pos_text: FeatureMatrix,
    neg_text: FeatureMatrix,
    truth: np.ndarray,
    tau: float,
    grid: Optional[Sequence[float]] = None,
) -> float:
    """
    Pick the common bias from a grid that maximizes M2 F1 on a calibration set

    Args:
        student: Calibration student features
        pos_text: Positive prompt features
        neg_text: Negative prompt features
        truth: N x L true presence
        tau: Temperature
        grid: Candidate biases (first best wins)

    Returns:
        Chosen bias
    """
    grid = DEFAULT_BIAS_GRID if grid is None else tuple(grid)
    probs = positive_probability(student, pos_text, neg_text, tau)
    best_bias, best_f1 = float(grid[0]), -1.0
    for bias in grid:
        f1 = multilabel_metrics(probs > 0.5 + bias, truth).f1
        if f1 > best_f1:
            best_bias, best_f1 = float(bias), f1
    return best_bias
