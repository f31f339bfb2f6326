"""Directional checks of the loss choices on the synthetic teacher, plus the real-cache text check"""

import os

import pytest

from evaluation.directional import compare_variants
from src.enrichment.descriptions import DescriptionCache, build_label_texts
from src.enrichment.prompts import PromptStyle
from src.metrics.spectrum import pairwise_cosine_mean
from src.teacher.providers import CachedTeacher

REAL_CACHE = os.environ.get("VLD_REAL_TEACHER_CACHE")
REAL_DESCRIPTIONS = os.environ.get("VLD_REAL_DESCRIPTIONS")


@pytest.fixture(scope="module")
def summary():
    return compare_variants()


@pytest.mark.slow
def test_image_contrast_beats_cls_alone(summary):
    cls_only, with_contrast = summary["cls"], summary["cls+im_cst"]
    assert with_contrast["ood_zero_shot"] > cls_only["ood_zero_shot"]
    assert with_contrast["m_rel_train"] > cls_only["m_rel_train"]


@pytest.mark.slow
def test_vlprox_does_not_raise_order_violations(summary):
    assert summary["cls+im_cst+vlprox"]["m_vlalign_ood"] <= summary["cls+im_cst"]["m_vlalign_ood"]


@pytest.mark.skipif(not (REAL_CACHE and REAL_DESCRIPTIONS),
                    reason="needs text features from a pretrained VLM, which the synthetic teacher cannot stand in "
                           "for: set VLD_REAL_TEACHER_CACHE to a scripts/export_teacher_cache.py output and "
                           "VLD_REAL_DESCRIPTIONS to its description cache")
def test_enriched_texts_are_less_similar_than_plain():
    teacher = CachedTeacher(REAL_CACHE)
    cache = DescriptionCache(REAL_DESCRIPTIONS)
    labels = sorted({entry.label for entry in cache.entries()})
    plain = teacher.text_features(list(build_label_texts(labels, PromptStyle.PLAIN).values()))
    enriched = teacher.text_features(list(build_label_texts(labels, PromptStyle.ORIGINAL, cache).values()))
    assert pairwise_cosine_mean(enriched) < pairwise_cosine_mean(plain)
