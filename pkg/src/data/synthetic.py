"""
Synthetic desk-scale dataset for vl-distill
Builds an ID/OOD split over the synthetic teacher's classes, with student inputs
and captions derived from teacher features
"""

from typing import List, Optional, Tuple

import numpy as np

from src.core.embedding import LabelSpace
from src.core.errors import BadSpec
from src.data.splits import Sample, SplitDataset, split_labels
from src.enrichment.captions import CaptionSet
from src.enrichment.prompts import PLAIN_PROMPT
from src.teacher.providers import SyntheticTeacher, SyntheticTeacherSpec, synthetic_teacher
from src.utils.logger import get_logger

logger = get_logger(__name__)

CAPTION_SCENES = ("in a field", "on a table", "against a white background", "seen up close", "at dusk")
CAPTION_ADJECTIVES = ("small", "large", "bright", "dark", "blurry")


def caption_for(sample_id: str, label: str, seed: int) -> str:
    """Seeded template caption for a synthetic sample"""
    index = int(sample_id.rsplit("/", 1)[-1])
    rng = np.random.default_rng([seed, 2, index, *label.encode("utf-8")])
    adjective = CAPTION_ADJECTIVES[rng.integers(len(CAPTION_ADJECTIVES))]
    scene = CAPTION_SCENES[rng.integers(len(CAPTION_SCENES))]
    return f"a {adjective} {label} {scene}"


def student_input_map(spec: SyntheticTeacherSpec, input_dim: int) -> np.ndarray:
    """Fixed random linear map from teacher space to the student's input space"""
    rng = np.random.default_rng([spec.seed, 3])
    return rng.standard_normal((input_dim, spec.embed_dim)) / np.sqrt(spec.embed_dim)


def synthetic_dataset(
    spec: Optional[SyntheticTeacherSpec] = None,
    samples_per_class: int = 20,
    ood_fraction: float = 0.5,
    id_eval_fraction: float = 0.25,
    input_dim: int = 32,
    input_noise: float = 0.05,
    split_seed: Optional[int] = None,
) -> Tuple[SplitDataset, SyntheticTeacher]:
    """
    Generate the synthetic dataset and its teacher

    Every ID class contributes samples_per_class samples, split between train and
    id_eval; every OOD class contributes all of its samples to ood_eval.

    Args:
        spec: Synthetic teacher spec
        samples_per_class: Samples generated per class
        ood_fraction: Fraction of classes held out as OOD
        id_eval_fraction: Fraction of each ID class reserved for id_eval
        input_dim: Width of the student input vectors
        input_noise: Std of the noise added to student inputs
        split_seed: Label split seed (default: spec.seed)

    Returns:
        Tuple of (SplitDataset, SyntheticTeacher)
    """
    teacher = synthetic_teacher(spec)
    spec = teacher.spec
    if samples_per_class < 2:
        raise BadSpec(f"samples_per_class must be >= 2, got {samples_per_class}")
    if not 0 < ood_fraction < 1:
        raise BadSpec(f"ood_fraction must be in (0, 1), got {ood_fraction}")
    if input_dim < 1 or input_noise < 0:
        raise BadSpec("input_dim must be >= 1 and input_noise >= 0")
    n_eval = int(round(samples_per_class * id_eval_fraction))
    if not 1 <= n_eval < samples_per_class:
        raise BadSpec(f"id_eval_fraction {id_eval_fraction} leaves no train or no id_eval samples")

    seed = spec.seed if split_seed is None else split_seed
    id_labels, ood_labels = split_labels(teacher.labels, seed=seed, ratio=1 - ood_fraction)
    projection = student_input_map(spec, input_dim)

    def make(label: str, index: int) -> Sample:
        sample_id = teacher.sample_id(label, index)
        rng = np.random.default_rng([spec.seed, 4, teacher.labels.index(label), index])
        inputs = projection @ teacher.image_feature(sample_id) + input_noise * rng.standard_normal(input_dim)
        inputs.setflags(write=False)
        return Sample(sample_id, label, inputs=inputs, caption_ref=sample_id)

    train: List[Sample] = []
    id_eval: List[Sample] = []
    ood_eval: List[Sample] = []
    for label in id_labels:
        samples = [make(label, i) for i in range(samples_per_class)]
        train.extend(samples[:samples_per_class - n_eval])
        id_eval.extend(samples[samples_per_class - n_eval:])
    for label in ood_labels:
        ood_eval.extend(make(label, i) for i in range(samples_per_class))

    texts = {label: PLAIN_PROMPT.format(label=label) for label in teacher.labels}
    features = teacher.text_features(list(texts.values()))
    label_space = LabelSpace(
        id_labels, ood_labels,
        descriptions={label: {"plain": text} for label, text in texts.items()},
        text_features={label: row for label, row in zip(texts, features.data)},
    )
    dataset = SplitDataset(tuple(train), tuple(id_eval), tuple(ood_eval), label_space,
                           name=f"synthetic-{spec.seed}")
    logger.info(f"Synthetic dataset {dataset.name}: {dataset.counts()}")
    return dataset, teacher


def synthetic_captions(dataset: SplitDataset, teacher, seed: Optional[int] = None) -> CaptionSet:
    """Template captions for every sample, with teacher features resolved"""
    seed = teacher.spec.seed if seed is None else seed
    captions = CaptionSet(generator_id=f"synthetic-captions:{seed}")
    for sample in dataset.all_samples():
        captions.add(sample.sample_id, caption_for(sample.sample_id, sample.label, seed))
    return captions.resolve_features(teacher)
