"""Tests for caption sets and learned prompt contexts"""

from unittest.mock import Mock

import numpy as np
import pytest
import torch

from src.core.errors import CacheConflict, EmptyGeneration, EncoderLacksTokenAccess, MissingCaptions
from src.enrichment.captions import CaptionSet, generate_captions
from src.enrichment.learned_prompt import DualPrompt, LearnedPrompt, encode_label_set, encode_learned_prompt
from src.data.splits import Sample
from src.teacher.providers import synthetic_teacher
from src.teacher.text_encoder import SyntheticTextEncoder


@pytest.fixture(scope="module")
def teacher():
    return synthetic_teacher(num_classes=6, embed_dim=8, seed=3)


@pytest.fixture(scope="module")
def encoder(teacher):
    return SyntheticTextEncoder(teacher, vocab_size=64)


class StringOnlyEncoder:
    def encode_text(self, text):
        return torch.ones(4)


# captions

def test_caption_set_conflict_and_features(teacher):
    captions = CaptionSet()
    captions.add("class_000/0000", "a small class_000 in a field")
    captions.add("class_000/0000", "a small class_000 in a field")
    with pytest.raises(CacheConflict):
        captions.add("class_000/0000", "another caption")

    captions.resolve_features(teacher)
    matrix = captions.feature_matrix(["class_000/0000"])
    assert matrix.ids == ("cap:class_000/0000",)
    np.testing.assert_array_equal(matrix.data[0], teacher.text_feature("a small class_000 in a field"))
    with pytest.raises(MissingCaptions):
        captions.feature_matrix(["class_001/0000"])


def test_caption_set_save_load(tmp_path):
    captions = CaptionSet(generator_id="cap-gen")
    captions.add("b/0001", "a white car is parked in a field")
    captions.add("a/0000", "a spotted cat")
    path = tmp_path / "captions.jsonl"
    captions.save(str(path))
    loaded = CaptionSet.load(str(path))
    assert loaded.captions == captions.captions
    assert loaded.generator_id == "cap-gen"


def test_generate_captions_skips_existing():
    captioner = Mock()
    captioner.client_id = "mock-captioner"
    captioner.caption = Mock(return_value=" a white car is parked in a field ")
    existing = CaptionSet()
    existing.add("car/0000", "already captioned")
    samples = [Sample("car/0000", "car", image_ref="0.png"), Sample("car/0001", "car", image_ref="1.png")]

    captions = generate_captions(samples, captioner, existing, workers=1)
    captioner.caption.assert_called_once_with("car/0001", "1.png")
    assert captions.captions["car/0001"] == "a white car is parked in a field"
    assert captions.generator_id == "mock-captioner"


def test_empty_caption_raises():
    captioner = Mock()
    captioner.client_id = "mock-captioner"
    captioner.caption = Mock(return_value="  ")
    with pytest.raises(EmptyGeneration):
        generate_captions([Sample("car/0000", "car")], captioner)


def test_failed_caption_keeps_the_others(tmp_path):
    def caption(sample_id, image_ref):
        if sample_id == "car/0001":
            raise RuntimeError("captioner timed out")
        return f"a car numbered {sample_id[-1]}"

    captioner = Mock()
    captioner.client_id = "mock-captioner"
    captioner.caption = Mock(side_effect=caption)
    samples = [Sample(f"car/000{i}", "car", image_ref=f"{i}.png") for i in range(3)]
    path = tmp_path / "captions.jsonl"
    captions = CaptionSet()

    with pytest.raises(EmptyGeneration) as info:
        generate_captions(samples, captioner, captions, workers=2, save_path=str(path))
    assert info.value.label == "car/0001"
    assert isinstance(info.value.__cause__, RuntimeError)
    assert set(captions.captions) == {"car/0000", "car/0002"}
    assert CaptionSet.load(str(path)).captions == captions.captions


# learned prompts

def test_label_name_is_one_token(encoder, teacher):
    tokens = encoder.tokenize(f"a photo of {teacher.labels[2]}")
    assert tokens.tolist()[-1] == 2
    assert len(tokens) == 4


def test_learned_prompt_feature_is_unit_norm(encoder, teacher):
    prompt = LearnedPrompt(encoder.token_dim, num_tokens=4, seed=1)
    feature = encode_learned_prompt(prompt, teacher.labels[0], encoder)
    assert feature.shape == (teacher.embed_dim,)
    assert torch.linalg.norm(feature).item() == pytest.approx(1.0, abs=1e-12)


def test_zero_context_differs_from_plain_prompt(encoder, teacher):
    prompt = LearnedPrompt(encoder.token_dim, num_tokens=4, init_std=0.0)
    assert not prompt.context.detach().any()
    label = teacher.labels[3]
    learned = encode_learned_prompt(prompt, label, encoder).detach()
    plain = encoder.encode_text(f"A photo of a {label}")
    assert learned.shape == plain.shape
    assert not torch.allclose(learned, plain)


def test_gradient_matches_finite_differences(encoder, teacher):
    prompt = LearnedPrompt(encoder.token_dim, num_tokens=3, init_std=0.3, seed=2)
    target = torch.as_tensor(teacher.centers[1])

    def objective() -> torch.Tensor:
        return encode_learned_prompt(prompt, teacher.labels[0], encoder) @ target

    objective().backward()
    analytic = prompt.context.grad.clone()

    eps = 1e-6
    numeric = torch.zeros_like(analytic)
    with torch.no_grad():
        for idx in np.ndindex(*analytic.shape):
            original = prompt.context[idx].item()
            prompt.context[idx] = original + eps
            plus = objective().item()
            prompt.context[idx] = original - eps
            minus = objective().item()
            prompt.context[idx] = original
            numeric[idx] = (plus - minus) / (2 * eps)
    assert torch.max(torch.abs(analytic - numeric)).item() < 1e-3


def test_encoder_stays_frozen(encoder, teacher):
    before = {name: p.detach().clone() for name, p in encoder.named_parameters()}
    prompt = LearnedPrompt(encoder.token_dim, num_tokens=2)
    optimizer = torch.optim.SGD(prompt.parameters(), lr=0.5)
    for _ in range(3):
        optimizer.zero_grad()
        loss = -encode_label_set(prompt, teacher.labels, encoder).sum()
        loss.backward()
        optimizer.step()
    for name, p in encoder.named_parameters():
        assert p.grad is None
        assert torch.equal(p, before[name])
    assert prompt.context.abs().sum().item() > 0


def test_string_only_encoder_rejected():
    prompt = LearnedPrompt(4, num_tokens=2)
    with pytest.raises(EncoderLacksTokenAccess):
        encode_learned_prompt(prompt, "lotus", StringOnlyEncoder())


def test_context_length_limit(encoder, teacher):
    prompt = LearnedPrompt(encoder.token_dim, num_tokens=77)
    with pytest.raises(ValueError):
        encode_learned_prompt(prompt, teacher.labels[0], encoder)
    with pytest.raises(ValueError):
        LearnedPrompt(encoder.token_dim, num_tokens=0)


def test_dual_prompt_shapes(encoder, teacher):
    dual = DualPrompt(encoder.token_dim, num_tokens=2)
    pos, neg = dual.feature_matrices(list(teacher.labels), encoder)
    assert pos.rows == neg.rows == len(teacher.labels)
    assert not np.allclose(pos.data, neg.data)
