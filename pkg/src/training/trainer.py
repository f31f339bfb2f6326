"""
Training loops for vl-distill
Base distillation on X_train, balanced few-shot finetuning on X_ood and the sequential
OOD adaptation protocol
"""

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import torch
from tqdm import tqdm

from src.core.embedding import FeatureKind, FeatureMatrix, labels_to_indices
from src.core.errors import DivergedLoss, EmptyFewshotPool, EncoderLacksTokenAccess, OverlappingSplits
from src.data.manifest import stack_inputs
from src.data.splits import FewshotDraw, Sample, SplitDataset, draw_fewshot
from src.enrichment.captions import CaptionSet
from src.enrichment.learned_prompt import LearnedPrompt, TokenAccessEncoder, as_feature_matrix, encode_label_set
from src.losses.distill_losses import (
    LossResult,
    cls_terms,
    combine,
    loss_cap,
    loss_cls,
    loss_im_cst,
    loss_mse,
    loss_vlprox,
    teacher_gate,
)
from src.training.config import TrainConfig, build_optimizer, build_scheduler
from src.training.evaluate import evaluate
from src.training.sampler import BalancedBatchSampler, base_batches
from src.training.student import StudentModel
from src.utils.logger import get_logger, log_epoch

logger = get_logger(__name__)


@dataclass
class EpochRecord:
    """Per-epoch loss averages, learning rate and any evaluated accuracies"""

    phase: str
    epoch: int
    values: Dict[str, float]

    def to_dict(self) -> Dict:
        return {"phase": self.phase, "epoch": self.epoch, "values": dict(self.values)}


@dataclass
class TrainResult:
    """Trained student, its epoch log and the learned prompt when one was trained"""

    student: StudentModel
    history: List[EpochRecord] = field(default_factory=list)
    prompt: Optional[LearnedPrompt] = None
    text: Optional[FeatureMatrix] = None

    def curve(self, key: str = "total") -> List[float]:
        return [record.values[key] for record in self.history if key in record.values]


@dataclass
class FinetuneResult(TrainResult):
    """Finetuning result with ID-retention and OOD accuracies before and after"""

    before: Dict[str, float] = field(default_factory=dict)
    after: Dict[str, float] = field(default_factory=dict)


@dataclass
class SequentialResult:
    """Zero-shot accuracy on the second OOD half before and after finetuning on the first"""

    before: float
    after: float
    split1_before: float
    split1_after: float
    seed: int

    def to_dict(self) -> Dict:
        return {"before": self.before, "after": self.after, "split1_before": self.split1_before,
                "split1_after": self.split1_after, "seed": self.seed}


@dataclass
class _Pool:
    """Everything the losses need about the samples a loop draws batches from"""

    samples: List[Sample]
    inputs: torch.Tensor
    labels: np.ndarray
    teacher_img: FeatureMatrix
    captions: Optional[FeatureMatrix] = None

    @property
    def ids(self) -> Tuple[str, ...]:
        return self.teacher_img.ids


def _build_pool(samples: Sequence[Sample], teacher, label_order: Sequence[str], config: TrainConfig,
                captions: Optional[CaptionSet], input_loader: Optional[Callable]) -> _Pool:
    samples = list(samples)
    ids = [s.sample_id for s in samples]
    caption_features = None
    if "cap" in config.active_losses:
        if captions is None:
            captions = CaptionSet()
        caption_features = captions.feature_matrix(ids)
    return _Pool(
        samples=samples,
        inputs=torch.as_tensor(stack_inputs(samples, input_loader), dtype=torch.float64),
        labels=labels_to_indices([s.label for s in samples], label_order),
        teacher_img=teacher.image_features(ids),
        captions=caption_features,
    )


def batch_losses(student_feats: FeatureMatrix, teacher_img: FeatureMatrix, text: FeatureMatrix,
                 labels: np.ndarray, config: TrainConfig,
                 captions: Optional[FeatureMatrix] = None) -> Dict[str, LossResult]:
    """
    Evaluate every active loss on one batch

    Args:
        student_feats: B x D student features
        teacher_img: B x D teacher image features, same ids
        text: C x D label text features
        labels: Label index of each row into text
        config: Enabled losses and loss settings
        captions: B x D caption features (required when cap is active)

    Returns:
        Loss name -> LossResult
    """
    cfg = config.loss
    results: Dict[str, LossResult] = {}
    for name in config.active_losses:
        if name == "cls":
            results[name] = loss_cls(student_feats, text, labels, cfg.tau_cls)
        elif name == "mse":
            results[name] = loss_mse(student_feats, teacher_img)
        elif name == "im_cst":
            keep = teacher_gate(teacher_img, text, labels, cfg.tau_cls) if cfg.filter_im_cst else None
            results[name] = loss_im_cst(student_feats, teacher_img, cfg.tau_imcst, keep=keep)
        elif name == "vlprox":
            results[name] = loss_vlprox(student_feats, teacher_img, text, labels, cfg.vlprox_tau,
                                        cfg.k_vlprox, use_filter=cfg.filter_vlprox)
        elif name == "cap":
            results[name] = loss_cap(student_feats, captions, labels, cfg.tau_cap)
    return results


def _dump_state(dump_dir: Optional[str], phase: str, epoch: int, step: int, student: StudentModel,
                values: Dict[str, float]) -> Optional[str]:
    if dump_dir is None:
        return None
    out = Path(dump_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"diverged-{phase}-e{epoch}-s{step}.pt"
    torch.save({"student": student.state_dict(), "epoch": epoch, "step": step, "values": values}, path)
    (out / f"diverged-{phase}-e{epoch}-s{step}.json").write_text(
        json.dumps({"epoch": epoch, "step": step, "values": values}, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    return str(path)


def _fit(
    phase: str,
    student: StudentModel,
    pool: _Pool,
    label_order: Sequence[str],
    text: FeatureMatrix,
    config: TrainConfig,
    batch_plan: Callable[[], Iterable[np.ndarray]],
    steps_per_epoch: int,
    prompt: Optional[LearnedPrompt] = None,
    text_encoder=None,
    on_epoch_end: Optional[Callable[[int], Dict[str, float]]] = None,
    dump_dir: Optional[str] = None,
) -> List[EpochRecord]:
    """Shared optimization loop; one optimizer step per batch"""
    history: List[EpochRecord] = []
    active = config.active_losses
    weights = config.weights
    if not active:
        logger.warning(f"{phase}: every enabled loss has weight 0, parameters will not change")

    optimizer = build_optimizer(student.parameters(), config)
    scheduler = build_scheduler(optimizer, config, steps_per_epoch)
    prompt_optimizer = torch.optim.SGD(prompt.parameters(), lr=config.prompt_lr) if prompt is not None else None

    step = 0
    student.train()
    for epoch in range(1, config.epochs + 1):
        sums: Dict[str, float] = {}
        seen = 0
        batches = list(batch_plan())
        for index in tqdm(batches, desc=f"{phase} {epoch}/{config.epochs}", disable=not config.progress,
                          leave=False):
            step += 1
            if not active:
                continue
            batch_ids = [pool.ids[i] for i in index]
            labels = pool.labels[index]
            teacher_img = pool.teacher_img.select(batch_ids)
            captions = pool.captions.select([f"cap:{sid}" for sid in batch_ids]) if pool.captions is not None else None

            out = student(pool.inputs[index])
            feats = FeatureMatrix(out.detach().numpy(), tuple(batch_ids), FeatureKind.STUDENT_VISUAL)

            batch_text = text
            if prompt is not None:
                learned = encode_label_set(prompt, label_order, text_encoder)
                prompt_loss = cls_terms(out.detach(), learned, torch.from_numpy(labels), config.loss.tau_cls).mean()
                prompt_optimizer.zero_grad()
                prompt_loss.backward()
                prompt_optimizer.step()
                batch_text = as_feature_matrix(learned, label_order)

            results = batch_losses(feats, teacher_img, batch_text, labels, config, captions)
            total = combine(results, weights)
            values = {f"loss_{name}": r.value for name, r in results.items()}
            values["total"] = total.value
            if not all(math.isfinite(v) for v in values.values()) or not np.all(np.isfinite(total.grad)):
                dump_path = _dump_state(dump_dir, phase, epoch, step, student, values)
                raise DivergedLoss(epoch, step, values, dump_path)

            optimizer.zero_grad()
            out.backward(torch.from_numpy(total.grad))
            optimizer.step()
            scheduler.step()

            rows = len(index)
            seen += rows
            for key, value in values.items():
                sums[key] = sums.get(key, 0.0) + value * rows

        record_values = {key: value / seen for key, value in sums.items()} if seen else {}
        record_values["lr"] = optimizer.param_groups[0]["lr"]
        if on_epoch_end is not None and config.eval_every and epoch % config.eval_every == 0:
            record_values.update(on_epoch_end(epoch))
        history.append(EpochRecord(phase, epoch, record_values))
        log_epoch(logger, phase, epoch, record_values)
    student.eval()
    return history


def train(
    student: StudentModel,
    teacher,
    data: SplitDataset,
    config: TrainConfig,
    captions: Optional[CaptionSet] = None,
    text_encoder=None,
    input_loader: Optional[Callable] = None,
    dump_dir: Optional[str] = None,
) -> TrainResult:
    """
    Base distillation of the student on X_train over Y_id

    Args:
        student: Student to train (updated in place)
        teacher: Teacher provider
        data: Dataset with train / id_eval / ood_eval splits
        config: Training config
        captions: Caption set with resolved features (required when cap is active)
        text_encoder: Token-level text encoder (required for prompt learning)
        input_loader: Loader for samples without precomputed inputs
        dump_dir: Where to write the state dump if the loss diverges

    Returns:
        TrainResult
    """
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    space = data.label_space
    label_order = list(space.id_labels)
    pool = _build_pool(data.train, teacher, label_order, config, captions, input_loader)
    text = space.text_matrix(label_order)

    prompt = None
    if config.prompt_learning:
        if not isinstance(text_encoder, TokenAccessEncoder):
            raise EncoderLacksTokenAccess("Prompt learning needs a token-level text encoder")
        prompt = LearnedPrompt(text_encoder.token_dim, config.prompt_tokens, seed=config.seed)

    def eval_text() -> Optional[FeatureMatrix]:
        if prompt is None:
            return None
        with torch.no_grad():
            return as_feature_matrix(encode_label_set(prompt, space.all_labels, text_encoder), space.all_labels)

    def on_epoch_end(epoch: int) -> Dict[str, float]:
        all_text = eval_text()
        id_acc = evaluate(student, teacher, data, "id_eval", text=all_text, tau=config.loss.tau_cls,
                          input_loader=input_loader).accuracy
        ood_acc = evaluate(student, teacher, data, "ood_eval", text=all_text, tau=config.loss.tau_cls,
                           input_loader=input_loader).accuracy
        return {"acc_id": id_acc, "acc_ood": ood_acc}

    steps_per_epoch = -(-len(pool.samples) // config.batch_size)
    logger.info(f"Training on {len(pool.samples)} samples, {len(label_order)} labels, "
                f"losses={config.active_losses}, epochs={config.epochs}, seed={config.seed}")
    history = _fit(
        "train", student, pool, label_order, text, config,
        batch_plan=lambda: base_batches(len(pool.samples), config.batch_size, rng),
        steps_per_epoch=steps_per_epoch, prompt=prompt, text_encoder=text_encoder,
        on_epoch_end=on_epoch_end, dump_dir=dump_dir,
    )
    return TrainResult(student, history, prompt, eval_text())


def split_accuracies(student: StudentModel, teacher, data: SplitDataset, draw: Optional[FewshotDraw] = None,
                     ood_labels: Optional[Sequence[str]] = None, tau: float = 0.01,
                     input_loader: Optional[Callable] = None) -> Dict[str, float]:
    """ID accuracy over Y_id and OOD accuracy over the given OOD labels (support set excluded)"""
    ood_labels = list(ood_labels) if ood_labels is not None else list(data.label_space.ood_labels)
    queries = draw.queries(data) if draw is not None else None
    return {
        "acc_id": evaluate(student, teacher, data, "id_eval", tau=tau, input_loader=input_loader).accuracy,
        "acc_ood": evaluate(student, teacher, data, "ood_eval", label_set=ood_labels, samples=queries, tau=tau,
                            input_loader=input_loader).accuracy,
    }


def fewshot_finetune(
    student: StudentModel,
    teacher,
    data: SplitDataset,
    shots: int,
    config: TrainConfig,
    draw: Optional[FewshotDraw] = None,
    label_order: Optional[Sequence[str]] = None,
    captions: Optional[CaptionSet] = None,
    input_loader: Optional[Callable] = None,
    dump_dir: Optional[str] = None,
) -> FinetuneResult:
    """
    Finetune a trained student on few-shot OOD samples with balanced batches

    Args:
        student: Trained student (updated in place)
        teacher: Teacher provider
        data: Dataset; base samples come from X_train, few-shot samples from X_ood
        shots: Samples per OOD class
        config: Finetuning config (see finetune_config)
        draw: Support set (default: a fresh draw with the config seed)
        label_order: Labels the losses classify among (default: Y_id then Y_ood)
        captions: Caption set (required when cap is active)
        input_loader: Loader for samples without precomputed inputs
        dump_dir: Where to write the state dump if the loss diverges

    Returns:
        FinetuneResult with before/after accuracies
    """
    torch.manual_seed(config.seed)
    draw = draw or draw_fewshot(data, shots, seed=config.seed)
    fewshot = draw.samples(data)
    if not fewshot:
        raise EmptyFewshotPool("Few-shot draw selected no samples")
    space = data.label_space
    label_order = list(label_order) if label_order is not None else list(space.all_labels)
    ood_labels = [label for label in label_order if label in set(space.ood_labels)]
    text = space.text_matrix(label_order)

    base = list(data.train)
    pool = _build_pool(base + fewshot, teacher, label_order, config, captions, input_loader)
    sampler = BalancedBatchSampler(len(base), len(fewshot), config.batch_size, seed=config.seed)
    offset = len(base)

    def plan() -> List[np.ndarray]:
        return [np.concatenate([b, f + offset]) for b, f in sampler.epoch()]

    tau = config.loss.tau_cls
    before = split_accuracies(student, teacher, data, draw, ood_labels, tau, input_loader)
    logger.info(f"Few-shot finetuning: {len(fewshot)} support samples ({shots} shots), "
                f"{len(base)} base samples, before {before}")
    history = _fit(
        "fewshot", student, pool, label_order, text, config, batch_plan=plan,
        steps_per_epoch=len(sampler),
        on_epoch_end=lambda epoch: split_accuracies(student, teacher, data, draw, ood_labels, tau, input_loader),
        dump_dir=dump_dir,
    )
    after = split_accuracies(student, teacher, data, draw, ood_labels, tau, input_loader)
    logger.info(f"Few-shot finetuning done: before {before} after {after}")
    return FinetuneResult(student, history, before=before, after=after)


def halve_labels(labels: Sequence[str], seed: int = 0) -> Tuple[Tuple[str, ...], Tuple[str, ...]]:
    """Split OOD labels into two seeded halves"""
    order = np.random.default_rng(seed).permutation(len(labels))
    half = len(labels) // 2
    labels = list(labels)
    return tuple(labels[i] for i in sorted(order[:half])), tuple(labels[i] for i in sorted(order[half:]))


def sequential_ood_protocol(
    student: StudentModel,
    teacher,
    data: SplitDataset,
    ood_split_1: Sequence[str],
    ood_split_2: Sequence[str],
    config: TrainConfig,
    shots: int = 5,
    input_loader: Optional[Callable] = None,
) -> SequentialResult:
    """
    Zero-shot accuracy on the second OOD half before and after finetuning on the first

    The student passed in is not modified; finetuning runs on a copy.

    Args:
        student: Trained student
        teacher: Teacher provider
        data: Dataset
        ood_split_1: OOD labels used for few-shot finetuning
        ood_split_2: OOD labels evaluated zero-shot
        config: Finetuning config
        shots: Samples per class of split 1
        input_loader: Loader for samples without precomputed inputs

    Returns:
        SequentialResult
    """
    overlap = set(ood_split_1) & set(ood_split_2)
    if overlap:
        raise OverlappingSplits(f"OOD halves share labels: {sorted(overlap)[:5]}")
    tau = config.loss.tau_cls
    split_2 = list(ood_split_2)
    split_1 = list(ood_split_1)

    draw = draw_fewshot(data, shots, seed=config.seed, labels=split_1)
    # split 1 is scored on its queries only, never on the support set
    queries = draw.queries(data)

    def split_acc(model: StudentModel, labels: List[str], samples: Optional[List[Sample]] = None) -> float:
        return evaluate(model, teacher, data, "ood_eval", label_set=labels, samples=samples, tau=tau,
                        input_loader=input_loader).accuracy

    before, split1_before = split_acc(student, split_2), split_acc(student, split_1, queries)
    adapted = copy.deepcopy(student)
    fewshot_finetune(adapted, teacher, data, shots, config, draw=draw,
                     label_order=list(data.label_space.id_labels) + split_1, input_loader=input_loader)
    after, split1_after = split_acc(adapted, split_2), split_acc(adapted, split_1, queries)
    logger.info(f"Sequential OOD protocol seed={config.seed}: split2 {before:.4f} -> {after:.4f}, "
                f"split1 {split1_before:.4f} -> {split1_after:.4f}")
    return SequentialResult(before, after, split1_before, split1_after, config.seed)
