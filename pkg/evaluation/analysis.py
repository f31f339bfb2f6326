"""
Static plots of feature caches
Singular-value spectra of text sets and a 2-D PCA projection of visual features,
written as PNG files
"""

import argparse
from pathlib import Path
from typing import Dict, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import seaborn as sns

from src.core.embedding import FeatureMatrix
from src.metrics.spectrum import center_rows, text_spectrum
from src.persistence.feature_cache import cache_read
from src.utils.logger import get_logger

logger = get_logger(__name__)

sns.set_style("whitegrid")
plt.rcParams['figure.figsize'] = (10, 6)
plt.rcParams['font.size'] = 10


def pca_2d(features: FeatureMatrix) -> np.ndarray:
    """Rows projected onto the top two principal directions"""
    centered = center_rows(features.data)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    return centered @ vt[:2].T


def plot_spectra(texts: Dict[str, FeatureMatrix], output: str, top_n: int = 20) -> Path:
    """
    Overlay the leading singular values of several text sets

    Args:
        texts: Set name -> text feature matrix
        output: PNG path
        top_n: Singular values shown per set

    Returns:
        Path of the written figure
    """
    fig, ax = plt.subplots()
    for name, matrix in texts.items():
        values = text_spectrum(matrix)[:top_n]
        ax.plot(np.arange(1, len(values) + 1), values, marker="o", label=name)
    ax.set_xlabel("index")
    ax.set_ylabel("singular value (centered)")
    ax.set_title("Text feature spectrum")
    ax.legend()
    return _save(fig, output)


def plot_projection(student: FeatureMatrix, teacher: Optional[FeatureMatrix], output: str,
                    labels: Optional[Sequence[str]] = None) -> Path:
    """Student (and teacher) visual features in a shared 2-D PCA frame"""
    stacked = student if teacher is None else FeatureMatrix(
        np.vstack([student.data, teacher.data]),
        tuple(f"s:{i}" for i in student.ids) + tuple(f"t:{i}" for i in teacher.ids),
        student.kind,
    )
    points = pca_2d(stacked)
    n = student.rows
    colors = None
    if labels is not None:
        names = sorted(set(labels))
        colors = [names.index(label) for label in labels]

    fig, ax = plt.subplots()
    ax.scatter(points[:n, 0], points[:n, 1], c=colors, cmap="tab20", s=14, marker="o", label="student")
    if teacher is not None:
        ax.scatter(points[n:, 0], points[n:, 1], c=colors, cmap="tab20", s=14, marker="x", label="teacher")
    ax.set_title("Visual features (PCA)")
    ax.legend()
    return _save(fig, output)


def _save(fig, output: str) -> Path:
    path = Path(output)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=150, bbox_inches='tight')
    plt.close(fig)
    logger.info(f"Wrote {path}")
    return path


def main():
    parser = argparse.ArgumentParser(description="Plot feature caches")
    parser.add_argument("--text", nargs="*", default=[], metavar="NAME=PATH", help="Text caches for the spectrum plot")
    parser.add_argument("--student", help="Student feature cache for the projection plot")
    parser.add_argument("--teacher", help="Teacher image cache (rows selected by student ids)")
    parser.add_argument("--out", default="./runs/plots")
    args = parser.parse_args()

    out = Path(args.out)
    if args.text:
        texts = {}
        for item in args.text:
            name, _, path = item.partition("=")
            texts[name] = cache_read(path).features
        plot_spectra(texts, str(out / "spectrum.png"))
    if args.student:
        student = cache_read(args.student).features
        teacher = cache_read(args.teacher).features.select(student.ids) if args.teacher else None
        labels = [sid.split("/")[0] for sid in student.ids]
        plot_projection(student, teacher, str(out / "projection.png"), labels)


if __name__ == "__main__":
    main()
