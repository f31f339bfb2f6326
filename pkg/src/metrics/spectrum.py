"""
Text-space diagnostics for vl-distill
Singular-value spectrum and mean pairwise cosine of label text features
"""

from typing import Dict, Optional

import numpy as np

from src.core.embedding import FeatureMatrix, cosine_from_squared_l2, normalize, pairwise_squared_l2
from src.core.errors import TooFewRows


def _require_rows(m: FeatureMatrix, minimum: int = 2):
    if m.rows < minimum:
        raise TooFewRows(m.rows, minimum)


def center_rows(data: np.ndarray) -> np.ndarray:
    """Subtract the column means; constant columns center to exact zeros"""
    mean = data.mean(axis=0)
    constant = np.all(data == data[0], axis=0)
    mean[constant] = data[0, constant]
    return data - mean


def text_spectrum(text: FeatureMatrix, top_n: Optional[int] = None) -> np.ndarray:
    """
    Singular values of the mean-centered text feature matrix

    Args:
        text: Text features (N >= 2)
        top_n: Number of leading values to return (default: all)

    Returns:
        Nonnegative singular values in descending order
    """
    _require_rows(text)
    values = np.linalg.svd(center_rows(text.data), compute_uv=False)
    return values if top_n is None else values[:top_n]


def pairwise_cosine_mean(text: FeatureMatrix) -> float:
    """
    Mean cosine similarity over all unordered pairs of rows

    Args:
        text: Text features (N >= 2), normalized here

    Returns:
        Mean cosine in [-1, 1]
    """
    _require_rows(text)
    unit = normalize(text).data
    cos = cosine_from_squared_l2(pairwise_squared_l2(unit, unit))
    upper = np.triu_indices(text.rows, k=1)
    return float(cos[upper].mean())


def spectrum_table(texts: Dict[str, FeatureMatrix], top_n: int = 20) -> Dict[str, Dict]:
    """
    Spectra and cosine means for several named text sets side by side
    (e.g. plain prompts, enriched prompts and captions)

    Args:
        texts: Set name -> text features
        top_n: Number of singular values kept per set

    Returns:
        Set name -> {"singular_values": [...], "pairwise_cosine_mean": float, "count": N}
    """
    table = {}
    for name, matrix in texts.items():
        table[name] = {
            "singular_values": [float(v) for v in text_spectrum(matrix, top_n)],
            "pairwise_cosine_mean": pairwise_cosine_mean(matrix),
            "count": matrix.rows,
        }
    return table
