"""
Distillation losses for vl-distill
The five training objectives, each returning a value, per-sample terms and the
gradient with respect to the student features (teacher and text features are constants)
"""

from dataclasses import dataclass
from typing import Callable, Dict, Mapping, Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from src.core.embedding import (
    DEFAULT_K_VLPROX,
    DEFAULT_TAU,
    FeatureMatrix,
    check_same_ids,
    check_temperature,
    stable_argmax,
)
from src.core.errors import DimMismatch, KOutOfRange, LabelOutOfRange, MissingWeight, ShapeMismatch


@dataclass(frozen=True)
class LossResult:
    """Scalar loss, per-sample terms and gradient w.r.t. student features"""

    value: float
    grad: np.ndarray
    per_sample: np.ndarray
    name: str = ""


# Tensor-level terms. Inputs are (N, D) float64 tensors; outputs are (N,) per-sample losses.

def squared_l2_matrix(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """All-pairs ||a_i - b_j||^2"""
    return (a * a).sum(dim=1, keepdim=True) - 2.0 * a @ b.T + (b * b).sum(dim=1)[None, :]


def cosine_logits(a: torch.Tensor, b: torch.Tensor, tau: float) -> torch.Tensor:
    return (1.0 - squared_l2_matrix(a, b) / 2.0) / tau


def cls_terms(student: torch.Tensor, text: torch.Tensor, labels: torch.Tensor, tau: float) -> torch.Tensor:
    """-log P_S(y | x) for every row"""
    return F.cross_entropy(cosine_logits(student, text, tau), labels, reduction="none")


def mse_terms(student: torch.Tensor, teacher: torch.Tensor) -> torch.Tensor:
    return ((student - teacher) ** 2).sum(dim=1)


def im_cst_terms(student: torch.Tensor, teacher: torch.Tensor, tau: float) -> torch.Tensor:
    logits = -squared_l2_matrix(student, teacher) / tau
    return -torch.diagonal(F.log_softmax(logits, dim=1))


def vlprox_terms(
    student: torch.Tensor,
    teacher_logits: torch.Tensor,
    text: torch.Tensor,
    topk: torch.Tensor,
    gate: torch.Tensor,
    tau: float,
) -> torch.Tensor:
    """Gated KL(P_T,topk || P_S,topk) per row; topk holds the teacher's k best label indices"""
    log_pt = F.log_softmax(torch.gather(teacher_logits, 1, topk), dim=1)
    log_ps = F.log_softmax(torch.gather(cosine_logits(student, text, tau), 1, topk), dim=1)
    kl = (log_pt.exp() * (log_pt - log_ps)).sum(dim=1)
    return kl * gate


def cap_terms(student: torch.Tensor, captions: torch.Tensor, classes: torch.Tensor, tau: float) -> torch.Tensor:
    """Own caption vs captions of other classes; same-class captions are not negatives"""
    logits = cosine_logits(student, captions, tau)
    n = student.shape[0]
    keep = (classes[:, None] != classes[None, :]) | torch.eye(n, dtype=torch.bool)
    logits = logits.masked_fill(~keep, float("-inf"))
    return -torch.diagonal(F.log_softmax(logits, dim=1))


def _constant(m: FeatureMatrix) -> torch.Tensor:
    return torch.tensor(m.data, dtype=torch.float64)


def _evaluate(name: str, student: FeatureMatrix, terms: Callable[[torch.Tensor], torch.Tensor]) -> LossResult:
    s = torch.tensor(student.data, dtype=torch.float64, requires_grad=True)
    per_sample = terms(s)
    value = per_sample.mean()
    (grad,) = torch.autograd.grad(value, s)
    return LossResult(
        value=float(value.detach()),
        grad=grad.numpy(),
        per_sample=per_sample.detach().numpy(),
        name=name,
    )


def _check_dim(a: FeatureMatrix, b: FeatureMatrix):
    if a.dim != b.dim:
        raise DimMismatch(a.dim, b.dim)


def _check_labels(labels: Sequence[int], rows: int, num_labels: int) -> torch.Tensor:
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.shape[0] != rows:
        raise ShapeMismatch(f"{labels.shape[0]} labels for {rows} rows")
    bad = labels[(labels < 0) | (labels >= num_labels)]
    if bad.size:
        raise LabelOutOfRange(int(bad[0]), num_labels)
    return torch.from_numpy(labels)


def teacher_gate(teacher_img: FeatureMatrix, text: FeatureMatrix, labels: Sequence[int], tau: float) -> np.ndarray:
    """I(x): 1 where the teacher's zero-shot argmax equals the sample's label"""
    logits = cosine_logits(_constant(teacher_img), _constant(text), tau).numpy()
    predicted = stable_argmax(logits, axis=1)
    return (predicted == np.asarray(labels)).astype(np.float64)


def loss_cls(student: FeatureMatrix, text: FeatureMatrix, labels: Sequence[int], tau: float = DEFAULT_TAU) -> LossResult:
    """
    Contrastive vision-language alignment against label text features

    Args:
        student: N x D student features
        text: C x D label text features
        labels: Label index into text for each student row
        tau: Temperature

    Returns:
        LossResult with per-sample -log P_S(y|x)
    """
    check_temperature(tau)
    _check_dim(student, text)
    y = _check_labels(labels, student.rows, text.rows)
    t = _constant(text)
    return _evaluate("cls", student, lambda s: cls_terms(s, t, y, tau))


def loss_mse(student: FeatureMatrix, teacher: FeatureMatrix) -> LossResult:
    """Squared error to the teacher's image features; gradient is 2(S - T)/N"""
    check_same_ids(student, teacher)
    t = _constant(teacher)
    return _evaluate("mse", student, lambda s: mse_terms(s, t))


def loss_im_cst(
    student: FeatureMatrix,
    teacher: FeatureMatrix,
    tau: float = DEFAULT_TAU,
    keep: Optional[np.ndarray] = None,
) -> LossResult:
    """
    Soft visual-space imitation: each student row must pick out its own teacher
    feature among the batch's teacher features

    Args:
        student: B x D student features
        teacher: B x D teacher image features for the same samples
        tau: Temperature
        keep: Optional 0/1 mask over rows; rows with 0 contribute nothing (filtering ablation)

    Returns:
        LossResult
    """
    check_temperature(tau)
    _check_dim(student, teacher)
    if student.rows != teacher.rows:
        raise ShapeMismatch(f"Batch sizes differ: {student.rows} vs {teacher.rows}")
    t = _constant(teacher)
    if keep is None:
        return _evaluate("im_cst", student, lambda s: im_cst_terms(s, t, tau))
    mask = torch.tensor(np.asarray(keep, dtype=np.float64))
    return _evaluate("im_cst", student, lambda s: im_cst_terms(s, t, tau) * mask)


def loss_vlprox(
    student: FeatureMatrix,
    teacher_img: FeatureMatrix,
    text: FeatureMatrix,
    labels: Sequence[int],
    tau: float = DEFAULT_TAU,
    k: int = DEFAULT_K_VLPROX,
    use_filter: bool = True,
) -> LossResult:
    """
    Match the student's label distribution to the teacher's over the teacher's
    top-k labels, for images the teacher classifies correctly

    Args:
        student: N x D student features
        teacher_img: N x D teacher image features
        text: C x D label text features
        labels: Label index per row
        tau: Temperature for both distributions
        k: Number of teacher-nearest labels (clamped to C)
        use_filter: Apply the I(x) gate; off for the no-filtering ablation

    Returns:
        LossResult (value >= 0)
    """
    check_temperature(tau)
    if k < 1:
        raise KOutOfRange(k, 1, text.rows)
    _check_dim(student, text)
    _check_dim(teacher_img, text)
    if student.rows != teacher_img.rows:
        raise ShapeMismatch(f"Batch sizes differ: {student.rows} vs {teacher_img.rows}")
    y = _check_labels(labels, student.rows, text.rows)

    t_txt = _constant(text)
    teacher_logits = cosine_logits(_constant(teacher_img), t_txt, tau)
    k_eff = min(k, text.rows)
    # stable sort on negated logits: ties go to the lowest label index
    order = np.argsort(-teacher_logits.numpy(), axis=1, kind="stable")[:, :k_eff]
    topk = torch.from_numpy(np.ascontiguousarray(order))
    if use_filter:
        gate = (torch.from_numpy(order[:, 0]) == y).to(torch.float64)
    else:
        gate = torch.ones(student.rows, dtype=torch.float64)
    return _evaluate("vlprox", student, lambda s: vlprox_terms(s, teacher_logits, t_txt, topk, gate, tau))


def loss_cap(
    student: FeatureMatrix,
    caption_text: FeatureMatrix,
    labels: Sequence,
    tau: float = DEFAULT_TAU,
) -> LossResult:
    """
    Caption contrast: pull x toward its own caption, away from other classes' captions

    Args:
        student: N x D student features
        caption_text: N x D caption features, row i is cap(x_i)
        labels: Class of each sample (only equality matters)
        tau: Temperature

    Returns:
        LossResult
    """
    check_temperature(tau)
    _check_dim(student, caption_text)
    if caption_text.rows != student.rows:
        raise ShapeMismatch(f"{caption_text.rows} captions for {student.rows} samples")
    _, classes = np.unique(np.asarray(labels), return_inverse=True)
    if classes.shape[0] != student.rows:
        raise ShapeMismatch(f"{classes.shape[0]} labels for {student.rows} rows")
    c = _constant(caption_text)
    cls_index = torch.from_numpy(classes.astype(np.int64).reshape(-1))
    return _evaluate("cap", student, lambda s: cap_terms(s, c, cls_index, tau))


def combine(losses: Mapping[str, LossResult], weights: Mapping[str, float]) -> LossResult:
    """
    Weighted sum of loss values, per-sample terms and gradients

    Zero-weight losses are skipped entirely, so their inputs never reach the total.

    Args:
        losses: Loss name -> LossResult
        weights: Loss name -> nonnegative weight (must cover every provided loss)

    Returns:
        Combined LossResult named "total"
    """
    if not losses:
        raise ValueError("combine() needs at least one loss")
    for name in losses:
        if name not in weights:
            raise MissingWeight(name)

    first = next(iter(losses.values()))
    value = 0.0
    grad = np.zeros_like(first.grad)
    per_sample = np.zeros_like(first.per_sample)
    for name, result in losses.items():
        if result.grad.shape != grad.shape:
            raise DimMismatch(grad.shape, result.grad.shape, what=f"gradient shape of '{name}'")
        weight = float(weights[name])
        if weight == 0.0:
            continue
        value += weight * result.value
        grad += weight * result.grad
        per_sample += weight * result.per_sample
    return LossResult(value=value, grad=grad, per_sample=per_sample, name="total")


LOSS_FUNCTIONS: Dict[str, Callable[..., LossResult]] = {
    "cls": loss_cls,
    "mse": loss_mse,
    "im_cst": loss_im_cst,
    "vlprox": loss_vlprox,
    "cap": loss_cap,
}
