"""Tests for the synthetic teacher, cached teachers and the synthetic text encoder"""

import numpy as np
import pytest

from src.core.embedding import FeatureKind, classify, stable_argmax
from src.core.errors import BadSpec, CacheCorrupt, InputMissing, MissingSample, MissingText
from src.persistence.feature_cache import cache_write
from src.teacher.providers import (
    IMAGE_CACHE_NAME,
    CachedTeacher,
    SyntheticTeacherSpec,
    cached_teacher,
    export_teacher_cache,
    synthetic_teacher,
)
from src.teacher.text_encoder import SyntheticTextEncoder


@pytest.fixture(scope="module")
def teacher():
    return synthetic_teacher(num_classes=8, embed_dim=10, seed=5)


class TestSyntheticTeacher:
    """Synthetic teacher behaviour"""

    def test_centers_are_unit_and_distinct(self, teacher):
        norms = np.linalg.norm(teacher.centers, axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-12)
        assert len({tuple(c) for c in teacher.centers}) == 8

    def test_plain_prompt_maps_to_center(self, teacher):
        label = teacher.labels[4]
        np.testing.assert_array_equal(teacher.text_feature(f"A photo of a {label}"), teacher.centers[4])

    def test_other_wording_is_offset_but_deterministic(self, teacher):
        label = teacher.labels[1]
        text = f"a photo of {label}, a round shape"
        first = teacher.text_feature(text)
        assert not np.allclose(first, teacher.centers[1])
        np.testing.assert_array_equal(first, teacher.text_feature(text))
        assert float(teacher.centers[1] @ first) > 0.3

    def test_same_seed_same_features(self):
        a = synthetic_teacher(seed=11, num_classes=4, embed_dim=6)
        b = synthetic_teacher(seed=11, num_classes=4, embed_dim=6)
        ids = [a.sample_id(a.labels[0], 0), a.sample_id(a.labels[3], 7)]
        np.testing.assert_array_equal(a.image_features(ids).data, b.image_features(ids).data)
        np.testing.assert_array_equal(a.centers, b.centers)

    def test_zero_noise_images_are_centers(self):
        clean = synthetic_teacher(num_classes=4, embed_dim=6, noise=0.0)
        ids = [clean.sample_id(label, 3) for label in clean.labels]
        np.testing.assert_array_equal(clean.image_features(ids).data, clean.centers)
        assert clean.zero_shot_accuracy(ids) == 1.0

    def test_noisy_teacher_is_imperfect_but_informative(self):
        noisy = synthetic_teacher(num_classes=8, embed_dim=16, noise=0.3, seed=0)
        ids = [noisy.sample_id(label, i) for label in noisy.labels for i in range(100)]
        text = noisy.text_features([f"A photo of a {label}" for label in noisy.labels])
        predicted = stable_argmax(classify(noisy.image_features(ids), text), axis=1)
        truth = np.repeat(np.arange(8), 100)
        accuracy = float(np.mean(predicted == truth))
        assert 1 / 8 < accuracy < 1.0
        assert noisy.zero_shot_accuracy(ids) == pytest.approx(accuracy)

    def test_image_features_kind_and_ids(self, teacher):
        ids = [teacher.sample_id(teacher.labels[0], i) for i in range(3)]
        matrix = teacher.image_features(ids)
        assert matrix.kind == FeatureKind.TEACHER_VISUAL
        assert matrix.ids == tuple(ids)

    def test_unknown_sample_and_text(self, teacher):
        with pytest.raises(MissingSample):
            teacher.image_feature("lotus/0001")
        with pytest.raises(MissingText):
            teacher.text_feature("A photo of a lotus")

    def test_duplicate_texts_get_distinct_ids(self, teacher):
        text = f"A photo of a {teacher.labels[0]}"
        matrix = teacher.text_features([text, text])
        assert matrix.ids == (text, f"{text}#1")

    def test_bad_spec(self):
        with pytest.raises(BadSpec):
            SyntheticTeacherSpec.parse({"num_classes": 1})
        with pytest.raises(BadSpec):
            SyntheticTeacherSpec.parse({"label_prefix": "class 1"})


class TestCachedTeacher:
    """Export and reload through the cache pair"""

    def test_round_trip(self, teacher, tmp_path):
        ids = [teacher.sample_id(label, 0) for label in teacher.labels]
        texts = [f"A photo of a {label}" for label in teacher.labels]
        export_teacher_cache(teacher, ids, texts + texts[:2], str(tmp_path), meta={"dataset": "unit"})

        cached = cached_teacher(str(tmp_path))
        assert cached.generator_id == teacher.generator_id
        assert cached.embed_dim == teacher.embed_dim
        assert cached.sample_ids == tuple(ids)
        assert cached.texts == texts

        expected = teacher.image_features(ids).data.astype(np.float32).astype(np.float64)
        np.testing.assert_array_equal(cached.image_features(ids).data, expected)
        np.testing.assert_allclose(cached.text_features(texts[:1]).data[0], teacher.centers[0], atol=1e-6)

    def test_missing_lookups(self, teacher, tmp_path):
        export_teacher_cache(teacher, [teacher.sample_id(teacher.labels[0], 0)],
                             [f"A photo of a {teacher.labels[0]}"], str(tmp_path))
        cached = CachedTeacher(str(tmp_path))
        with pytest.raises(MissingSample):
            cached.image_features(["nope/0000"])
        with pytest.raises(MissingText):
            cached.text_features(["a photo of nothing"])

    def test_missing_directory(self, tmp_path):
        with pytest.raises(InputMissing):
            CachedTeacher(str(tmp_path / "absent"))

    def test_wrong_kind_rejected(self, teacher, tmp_path):
        export_teacher_cache(teacher, [teacher.sample_id(teacher.labels[0], 0)],
                             [f"A photo of a {teacher.labels[0]}"], str(tmp_path))
        texts = teacher.text_features([f"A photo of a {teacher.labels[0]}"])
        cache_write(str(tmp_path / IMAGE_CACHE_NAME), texts)
        with pytest.raises(CacheCorrupt):
            CachedTeacher(str(tmp_path))


class TestSyntheticTextEncoder:
    """Token-level encoder paired with the synthetic teacher"""

    def test_parameters_frozen(self, teacher):
        encoder = SyntheticTextEncoder(teacher, vocab_size=128)
        assert all(not p.requires_grad for p in encoder.parameters())

    def test_deterministic_and_unit_norm(self, teacher):
        a = SyntheticTextEncoder(teacher, vocab_size=128, seed=1)
        b = SyntheticTextEncoder(teacher, vocab_size=128, seed=1)
        texts = [f"a photo of {label}" for label in teacher.labels[:3]]
        fa, fb = a.encode_texts(texts), b.encode_texts(texts)
        assert np.array_equal(fa.numpy(), fb.numpy())
        np.testing.assert_allclose(np.linalg.norm(fa.numpy(), axis=1), 1.0, atol=1e-12)

    def test_label_token_embeddings_are_centers(self, teacher):
        encoder = SyntheticTextEncoder(teacher, vocab_size=128)
        ids = encoder.tokenize(teacher.labels[6])
        assert ids.tolist() == [6]
        np.testing.assert_array_equal(encoder.embed_tokens(ids)[0].numpy(), teacher.centers[6])

    def test_empty_text_and_small_vocab(self, teacher):
        encoder = SyntheticTextEncoder(teacher, vocab_size=128)
        with pytest.raises(ValueError):
            encoder.tokenize("   ")
        with pytest.raises(ValueError):
            SyntheticTextEncoder(teacher, vocab_size=8)
