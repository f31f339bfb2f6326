"""Tests for prompt styles, token fitting and the description cache"""

import json
import sys
import types
from pathlib import Path
from unittest.mock import Mock, patch

import pytest

from src.core.errors import CacheConflict, CacheCorrupt, EmptyGeneration, MissingDescription
from src.enrichment.descriptions import (
    DescriptionCache,
    attach_label_texts,
    build_label_text,
    build_label_texts,
    generate_descriptions,
)
from src.enrichment.prompts import PromptStyle, instruction_for
from src.enrichment.tokenizer import (
    CONTEXT_LENGTH,
    OpenClipTokenCounter,
    SpanTokenCounter,
    default_token_counter,
    fit_description,
)
from src.teacher.providers import synthetic_teacher
from src.core.embedding import LabelSpace
from src.llm.fixture_client import FixtureClient

FIXTURES = Path(__file__).resolve().parents[2] / "data" / "fixtures"
MAU = ("The Egyptian Cat, or Egyptian Mau, is a medium-sized feline with a lithe and muscular body, "
       "a short, spotted coat in colors such as silver or bronze, and large, almond-shaped green eyes.")


@pytest.fixture
def cache():
    cache = DescriptionCache()
    cache.put("Egyptian cat", "original", "gen-a", MAU)
    return cache


# prompts

def test_instruction_templates():
    text = instruction_for("lotus", PromptStyle.SUCCINCT)
    assert "broadly describe the appearance and shape of lotus" in text
    assert "of lotus." in instruction_for("lotus", "distinct")
    with pytest.raises(ValueError):
        instruction_for("lotus", PromptStyle.PLAIN)


def test_plain_label_text():
    assert build_label_text("lotus", PromptStyle.PLAIN) == "A photo of a lotus"


def test_enriched_label_text(cache):
    text = build_label_text("Egyptian cat", PromptStyle.ORIGINAL, cache)
    assert text == f"a photo of Egyptian cat, {MAU}"


def test_missing_description_raises(cache):
    with pytest.raises(MissingDescription) as info:
        build_label_text("lotus", PromptStyle.DETAILED, cache)
    assert info.value.label == "lotus"
    with pytest.raises(MissingDescription):
        build_label_text("Egyptian cat", PromptStyle.ORIGINAL, None)


# token fitting

def test_span_counter_counts_words_and_punctuation():
    counter = SpanTokenCounter()
    assert counter.count("a photo of lotus") == 6
    assert counter.count("a photo, of lotus.") == 8


def test_long_description_truncated_to_limit():
    description = " ".join(["petal"] * 200)
    text = fit_description("a photo of lotus", description, counter=SpanTokenCounter())
    assert SpanTokenCounter().count(text) == CONTEXT_LENGTH
    assert text.startswith("a photo of lotus, petal")


def test_short_description_kept_whole():
    assert fit_description("a photo of lotus", "pink petals") == "a photo of lotus, pink petals"


def test_base_prompt_never_cut():
    counter = Mock()
    counter.count = Mock(side_effect=lambda t: 1000)
    assert fit_description("a photo of lotus", "pink petals", counter=counter) == "a photo of lotus"


class CharacterTokenizer:
    """Stands in for a byte-pair tokenizer: one token per non-space character"""

    def encode(self, text):
        return [c for c in text if not c.isspace()]


@pytest.fixture
def fresh_default_counter():
    default_token_counter.cache_clear()
    yield
    default_token_counter.cache_clear()


def test_default_counter_prefers_open_clip(fresh_default_counter):
    package = types.ModuleType("open_clip")
    tokenizer = types.ModuleType("open_clip.tokenizer")
    tokenizer.SimpleTokenizer = CharacterTokenizer
    with patch.dict(sys.modules, {"open_clip": package, "open_clip.tokenizer": tokenizer}):
        counter = default_token_counter()
        description = " ".join(["petal"] * 60)
        full = f"a photo of lotus, {description}"
        text = fit_description("a photo of lotus", description)

    assert isinstance(counter, OpenClipTokenCounter)
    # the counters disagree: spans fit, byte pairs do not
    assert SpanTokenCounter().count(full) <= CONTEXT_LENGTH < counter.count(full)
    assert text != full and text.startswith("a photo of lotus, petal")
    assert counter.count(text) <= CONTEXT_LENGTH


def test_default_counter_falls_back_to_spans(fresh_default_counter):
    with patch.dict(sys.modules, {"open_clip": None}):
        assert isinstance(default_token_counter(), SpanTokenCounter)


# cache

def test_put_is_idempotent_and_conflicts(cache):
    cache.put("Egyptian cat", "original", "gen-a", MAU)
    assert len(cache) == 1
    with pytest.raises(CacheConflict):
        cache.put("Egyptian cat", "original", "gen-a", "A different cat.")
    cache.put("Egyptian cat", "original", "gen-b", "A different cat.")
    assert cache.get("Egyptian cat", "original", "gen-b") == "A different cat."
    assert cache.get("Egyptian cat", "original") == MAU


def test_cache_persists_jsonl(tmp_path):
    path = tmp_path / "descriptions.jsonl"
    DescriptionCache(str(path)).put("lotus", "succinct", "gen", "A pink water flower.")
    record = json.loads(path.read_text(encoding="utf-8").splitlines()[0])
    assert set(record) == {"label", "style", "generator_id", "description", "timestamp"}
    assert DescriptionCache(str(path)).get("lotus", "succinct", "gen") == "A pink water flower."


def test_corrupt_cache_line(tmp_path):
    path = tmp_path / "descriptions.jsonl"
    path.write_text("{not json\n", encoding="utf-8")
    with pytest.raises(CacheCorrupt):
        DescriptionCache(str(path))


# generation

def test_generate_with_fixture_client():
    client = FixtureClient(str(FIXTURES / "descriptions.jsonl"))
    cache = DescriptionCache()
    entries = generate_descriptions(["Egyptian cat", "car"], PromptStyle.ORIGINAL, client, cache, workers=2)
    assert [e.label for e in entries] == ["Egyptian cat", "car"]
    assert entries[0].description == MAU
    assert entries[0].generator_id == client.client_id


FLOWER_LABELS = ["pink primrose", "hard-leaved pocket orchid", "canterbury bells", "sweet pea", "english marigold",
                 "tiger lily", "moon orchid", "bird of paradise", "monkshood", "globe thistle", "snapdragon",
                 "colt's foot"]


def test_flower_fixture_enriches_every_label():
    client = FixtureClient(str(FIXTURES / "descriptions.jsonl"))
    cache = DescriptionCache()
    generate_descriptions(FLOWER_LABELS, PromptStyle.ORIGINAL, client, cache, workers=4)
    texts = build_label_texts(FLOWER_LABELS, PromptStyle.ORIGINAL, cache, counter=SpanTokenCounter())
    assert list(texts) == FLOWER_LABELS
    assert len(set(texts.values())) == len(FLOWER_LABELS)
    for label, text in texts.items():
        assert text.startswith(f"a photo of {label}, ")


def test_cached_labels_skip_the_client():
    client = Mock()
    client.client_id = "mock"
    client.generate = Mock(return_value="A new description.")
    cache = DescriptionCache()
    cache.put("lotus", "detailed", "mock", "Cached text.")

    generate_descriptions(["lotus", "rose"], PromptStyle.DETAILED, client, cache)
    client.generate.assert_called_once_with(instruction_for("rose", PromptStyle.DETAILED))
    assert cache.get("lotus", "detailed", "mock") == "Cached text."


def test_empty_generation_keeps_other_results():
    client = Mock()
    client.client_id = "mock"
    client.generate = Mock(side_effect=lambda instruction: "" if "rose" in instruction else "Fine.")
    cache = DescriptionCache()
    with pytest.raises(EmptyGeneration) as info:
        generate_descriptions(["lotus", "rose", "tulip"], PromptStyle.ORIGINAL, client, cache, workers=1)
    assert info.value.label == "rose"
    assert cache.get("lotus", "original", "mock") == "Fine."
    assert cache.get("tulip", "original", "mock") == "Fine."
    assert cache.get("rose", "original", "mock") is None


def test_build_label_texts_for_every_label(cache):
    texts = build_label_texts(["a", "b"], PromptStyle.PLAIN)
    assert texts == {"a": "A photo of a a", "b": "A photo of a b"}


def test_attach_label_texts_resolves_teacher_features():
    teacher = synthetic_teacher(num_classes=4, embed_dim=6)
    space = LabelSpace(id_labels=list(teacher.labels[:2]), ood_labels=list(teacher.labels[2:]))
    cache = DescriptionCache()
    for label in teacher.labels:
        cache.put(label, "succinct", "gen", f"A thing shaped like {label}.")

    attach_label_texts(space, teacher, PromptStyle.SUCCINCT, cache)
    label = teacher.labels[3]
    assert space.descriptions[label]["succinct"].startswith(f"a photo of {label}, ")
    expected = teacher.text_feature(space.descriptions[label]["succinct"])
    assert (space.text_features[label] == expected).all()
