"""
Training-free few-shot classification for vl-distill
Key-value cache of student features of the support set blended with zero-shot logits
"""

from typing import Callable, Optional, Sequence

import numpy as np
import torch

from src.core.embedding import FeatureMatrix, labels_to_indices
from src.core.errors import DimMismatch, EmptyCache
from src.data.splits import Sample
from src.enrichment.prompts import PLAIN_PROMPT
from src.training.config import RetrievalConfig
from src.training.evaluate import StudentLike, student_features


def cache_logits(query: torch.Tensor, keys: torch.Tensor, values: torch.Tensor, beta: float) -> torch.Tensor:
    """A(q K^T) V with A(z) = exp(-beta (1 - z))"""
    return torch.exp(-beta * (1.0 - query @ keys.T)) @ values


def retrieval_fewshot(
    student: StudentLike,
    teacher,
    fewshot_data: Sequence[Sample],
    query: FeatureMatrix,
    labels_all: Sequence[str],
    cfg: Optional[RetrievalConfig] = None,
    text: Optional[FeatureMatrix] = None,
    input_loader: Optional[Callable] = None,
) -> np.ndarray:
    """
    Class probabilities from the cache model: alpha * A(q F^T) L + q T^T, then softmax

    Args:
        student: Student model (or precomputed features) for the support samples
        teacher: Teacher provider, used for label text features when text is not given
        fewshot_data: Support samples with labels in labels_all
        query: Student features of the queries
        labels_all: Label order of the output columns
        cfg: alpha and beta
        text: Label text features in labels_all order
        input_loader: Loader for support samples without precomputed inputs

    Returns:
        N x C probability matrix
    """
    cfg = cfg or RetrievalConfig()
    fewshot_data = list(fewshot_data)
    if not fewshot_data:
        raise EmptyCache("Few-shot cache is empty")
    labels_all = list(labels_all)
    if text is None:
        text = teacher.text_features([PLAIN_PROMPT.format(label=label) for label in labels_all])
    elif text.rows != len(labels_all):
        raise DimMismatch(len(labels_all), text.rows, what="label count")

    keys = student_features(student, fewshot_data, input_loader)
    if keys.dim != query.dim:
        raise DimMismatch(keys.dim, query.dim)
    if text.dim != query.dim:
        raise DimMismatch(text.dim, query.dim)

    classes = labels_to_indices([s.label for s in fewshot_data], labels_all)
    onehot = np.zeros((len(fewshot_data), len(labels_all)))
    onehot[np.arange(len(fewshot_data)), classes] = 1.0

    with torch.no_grad():
        q = torch.from_numpy(np.array(query.data))
        logits = q @ torch.from_numpy(np.array(text.data)).T
        if cfg.alpha != 0:
            logits = logits + cfg.alpha * cache_logits(q, torch.from_numpy(np.array(keys.data)),
                                                       torch.from_numpy(onehot), cfg.beta)
        return torch.softmax(logits, dim=1).numpy()
