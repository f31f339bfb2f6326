"""Tests for M_rel, M_neigh, M_vlalign and MSE/angle statistics against brute-force oracles"""

import itertools

import numpy as np
import pytest
from scipy.stats import ortho_group

from src.core.embedding import FeatureKind, FeatureMatrix, normalize
from src.core.errors import DimMismatch, IdMismatch, KOutOfRange
from src.metrics.alignment import (
    MetricReport,
    alignment_reports,
    count_inversions,
    metric_neigh,
    metric_rel,
    metric_vlalign,
    mse_angle_stats,
)


def unit(rng, n, d, kind=FeatureKind.STUDENT_VISUAL, prefix="x"):
    return normalize(FeatureMatrix(rng.standard_normal((n, d)), tuple(f"{prefix}{i}" for i in range(n)), kind))


def pair(rng, n, d):
    student = unit(rng, n, d)
    teacher = FeatureMatrix(unit(rng, n, d).data, student.ids, FeatureKind.TEACHER_VISUAL)
    return student, teacher


def sq(a, b):
    return float(np.sum((a - b) ** 2))


# Brute-force oracles, written with plain loops

def oracle_rel(s, t):
    n = len(s)
    hits = 0
    for i in range(n):
        best_j, best = 0, np.inf
        for j in range(n):
            d = sq(t[j], s[i])
            if d < best:
                best_j, best = j, d
        hits += best_j == i
    return hits / n


def oracle_knn(x, i, k):
    others = sorted((sq(x[i], x[j]), j) for j in range(len(x)) if j != i)
    return {j for _, j in others[:k]}


def oracle_neigh(s, t, k):
    n = len(s)
    return sum(len(oracle_knn(s, i, k) & oracle_knn(t, i, k)) / k for i in range(n)) / n


def oracle_vlalign(s, t, text, k):
    total = 0
    for i in range(len(s)):
        order = [j for _, j in sorted((sq(t[i], text[j]), j) for j in range(len(text)))][:k]
        arr = [sq(s[i], text[j]) for j in order]
        total += sum(1 for p in range(k) for q in range(p + 1, k) if arr[p] > arr[q])
    return total / len(s)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


def test_identical_matrices_are_perfectly_aligned(rng):
    student, _ = pair(rng, 20, 8)
    teacher = FeatureMatrix(student.data, student.ids, FeatureKind.TEACHER_VISUAL)
    text = unit(rng, 7, 8, FeatureKind.TEXT, prefix="t")
    assert metric_rel(student, teacher) == 1.0
    for k in range(1, 20):
        assert metric_neigh(student, teacher, k) == 1.0
    for k in range(1, 8):
        assert metric_vlalign(student, teacher, text, k) == 0.0


def test_cyclic_shift_gives_zero_rel(rng):
    teacher = unit(rng, 10, 6, FeatureKind.TEACHER_VISUAL)
    student = FeatureMatrix(np.roll(teacher.data, 1, axis=0), teacher.ids)
    assert metric_rel(student, teacher) == 0.0


def test_neigh_full_neighbourhood_is_one(rng):
    student, teacher = pair(rng, 12, 5)
    assert metric_neigh(student, teacher, 11) == 1.0


def test_vlalign_k1_and_reversal():
    student_rng = np.random.default_rng(0)
    student, teacher = pair(student_rng, 6, 4)
    text = unit(student_rng, 5, 4, FeatureKind.TEXT, prefix="t")
    assert metric_vlalign(student, teacher, text, 1) == 0.0

    # one image; the teacher sees texts at angles 0, 40, 80 degrees, the student the reverse
    angles = np.radians([0.0, 40.0, 80.0])
    text = FeatureMatrix(np.stack([np.cos(angles), np.sin(angles)], axis=1), ("a", "b", "c"), FeatureKind.TEXT)
    teacher = FeatureMatrix(np.array([[1.0, 0.0]]), ("x",), FeatureKind.TEACHER_VISUAL)
    student = FeatureMatrix(np.array([[np.cos(angles[2]), np.sin(angles[2])]]), ("x",))
    assert metric_vlalign(student, teacher, text, 3) == 3.0


@pytest.mark.parametrize("seed", range(20))
def test_metrics_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(12, 65))
    classes = int(rng.integers(6, 33))
    d = int(rng.integers(3, 10))
    student, teacher = pair(rng, n, d)
    text = unit(rng, classes, d, FeatureKind.TEXT, prefix="t")
    s, t, y = student.data, teacher.data, text.data

    assert metric_rel(student, teacher) == oracle_rel(s, t)
    for k in (3, 5, 10):
        assert metric_neigh(student, teacher, k) == pytest.approx(oracle_neigh(s, t, k), abs=1e-15)
    for k in (2, 3, 5):
        value = metric_vlalign(student, teacher, text, k)
        assert value == pytest.approx(oracle_vlalign(s, t, y, k), abs=1e-15)
        assert 0.0 <= value <= k * (k - 1) / 2


def test_streaming_blocks_match_dense(rng):
    student, teacher = pair(rng, 40, 6)
    text = unit(rng, 9, 6, FeatureKind.TEXT, prefix="t")
    assert metric_rel(student, teacher, dense_limit=7) == metric_rel(student, teacher)
    assert metric_neigh(student, teacher, 4, dense_limit=7) == metric_neigh(student, teacher, 4)
    assert metric_vlalign(student, teacher, text, 4, dense_limit=7) == metric_vlalign(student, teacher, text, 4)


def test_neigh_is_symmetric_and_rotation_invariant(rng):
    student, teacher = pair(rng, 30, 6)
    swapped = metric_neigh(FeatureMatrix(teacher.data, teacher.ids), FeatureMatrix(student.data, student.ids), 5)
    assert metric_neigh(student, teacher, 5) == swapped

    rotation = ortho_group.rvs(6, random_state=1)
    text = unit(rng, 8, 6, FeatureKind.TEXT, prefix="t")
    rot = lambda m: m.with_data(m.data @ rotation)
    assert metric_rel(rot(student), rot(teacher)) == metric_rel(student, teacher)
    assert metric_vlalign(rot(student), rot(teacher), rot(text), 4) == metric_vlalign(student, teacher, text, 4)


def test_metric_errors(rng):
    student, teacher = pair(rng, 6, 4)
    with pytest.raises(KOutOfRange):
        metric_neigh(student, teacher, 6)
    with pytest.raises(KOutOfRange):
        metric_neigh(student, teacher, 0)
    with pytest.raises(KOutOfRange):
        metric_vlalign(student, teacher, unit(rng, 3, 4, FeatureKind.TEXT, prefix="t"), 4)
    with pytest.raises(DimMismatch):
        metric_vlalign(student, teacher, unit(rng, 3, 5, FeatureKind.TEXT, prefix="t"), 2)
    with pytest.raises(IdMismatch):
        metric_rel(student, unit(rng, 6, 4, prefix="other"))


def test_count_inversions_matches_pair_count():
    values = np.array([3.0, 1.0, 2.0, 2.0, 0.5])
    expected = sum(1 for p, q in itertools.combinations(range(5), 2) if values[p] > values[q])
    assert count_inversions(values) == expected


def test_mse_angle_stats():
    s = FeatureMatrix(np.eye(3), ("a", "b", "c"))
    assert mse_angle_stats(s, s) == (0.0, 0.0)
    t = FeatureMatrix(np.eye(3)[[1, 2, 0]], ("a", "b", "c"), FeatureKind.TEACHER_VISUAL)
    mse, angle = mse_angle_stats(s, t)
    assert mse == pytest.approx(2.0)
    assert angle == pytest.approx(90.0)


def test_mse_angle_stats_random_rows(rng):
    student, teacher = pair(rng, 15, 7)
    mse, angle = mse_angle_stats(student, teacher)
    expected_angle = np.mean([np.degrees(np.arccos(np.clip(a @ b, -1, 1))) for a, b in zip(student.data, teacher.data)])
    assert mse == pytest.approx(np.mean([sq(a, b) for a, b in zip(student.data, teacher.data)]), abs=1e-6)
    assert angle == pytest.approx(expected_angle, abs=1e-6)


def test_alignment_reports_skip_invalid_k(rng):
    student, teacher = pair(rng, 5, 4)
    text = unit(rng, 3, 4, FeatureKind.TEXT, prefix="t")
    reports = alignment_reports(student, teacher, "ood", text, k_neigh=(2, 10), k_vlalign=(2, 5))
    names = [(r.metric, r.params.get("k")) for r in reports]
    assert ("M_neigh", 2) in names and ("M_neigh", 10) not in names
    assert ("M_vlalign", 2) in names and ("M_vlalign", 5) not in names
    assert all(r.count == 5 and r.dataset == "ood" for r in reports)
    assert MetricReport.from_dict(reports[0].to_dict()) == reports[0]
