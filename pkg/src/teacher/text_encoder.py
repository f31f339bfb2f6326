"""
Synthetic token-level text encoder for vl-distill
A frozen, seeded text encoder with token-embedding input access, paired with the
synthetic teacher so learned prompts can be trained without pretrained weights
"""

import hashlib
from typing import Dict, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from src.enrichment.tokenizer import CONTEXT_LENGTH, SpanTokenCounter
from src.teacher.providers import SyntheticTeacher

DEFAULT_VOCAB_SIZE = 4096


class SyntheticTextEncoder(nn.Module):
    """
    Label names are single tokens whose embeddings are the teacher's class centers;
    other words hash into a seeded vocabulary. Every parameter is frozen.
    """

    def __init__(self, teacher: SyntheticTeacher, vocab_size: int = DEFAULT_VOCAB_SIZE,
                 context_scale: float = 0.5, seed: int = 0):
        """
        Build the encoder

        Args:
            teacher: Synthetic teacher whose labels and centers seed the vocabulary
            vocab_size: Total number of token ids (labels included)
            context_scale: Weight of the pooled context path
            seed: Seed of the random weights
        """
        super().__init__()
        labels = teacher.labels
        if vocab_size <= len(labels):
            raise ValueError(f"vocab_size {vocab_size} must exceed the {len(labels)} label tokens")
        d = teacher.embed_dim
        self.token_dim = d
        self._label_ids: Dict[str, int] = {label: i for i, label in enumerate(labels)}
        self._vocab_size = vocab_size
        self._spans = SpanTokenCounter()

        generator = torch.Generator().manual_seed(seed)
        table = torch.randn(vocab_size, d, generator=generator, dtype=torch.float64) / d ** 0.5
        table[:len(labels)] = torch.as_tensor(teacher.centers, dtype=torch.float64)
        self.token_embedding = nn.Parameter(table, requires_grad=False)
        self.mix = nn.Parameter(torch.randn(d, d, generator=generator, dtype=torch.float64) / d ** 0.5,
                                requires_grad=False)
        self.readout = nn.Parameter(
            context_scale * torch.randn(d, d, generator=generator, dtype=torch.float64) / d ** 0.5,
            requires_grad=False,
        )
        self.position = nn.Parameter(0.1 * torch.randn(CONTEXT_LENGTH, d, generator=generator,
                                                       dtype=torch.float64), requires_grad=False)

    def _word_id(self, word: str) -> int:
        digest = hashlib.sha256(word.lower().encode("utf-8")).digest()
        offset = len(self._label_ids)
        return offset + int.from_bytes(digest[:8], "little") % (self._vocab_size - offset)

    def tokenize(self, text: str) -> torch.Tensor:
        """Token ids of a text; a label name anywhere in the text is one token"""
        ids = []
        position = 0
        for start, end in self._spans.spans(text):
            if start < position:
                continue
            matches = [name for name in self._label_ids if text.startswith(name, start)]
            if matches:
                label = max(matches, key=len)
                ids.append(self._label_ids[label])
                position = start + len(label)
            else:
                ids.append(self._word_id(text[start:end]))
                position = end
        if not ids:
            raise ValueError(f"Text has no tokens: {text!r}")
        return torch.tensor(ids[:CONTEXT_LENGTH], dtype=torch.long)

    def embed_tokens(self, token_ids: torch.Tensor) -> torch.Tensor:
        return self.token_embedding[token_ids]

    def encode_embeddings(self, embeddings: torch.Tensor) -> torch.Tensor:
        """
        Encode an L x d token-embedding sequence

        Args:
            embeddings: Token embeddings, context and label tokens alike

        Returns:
            Unit-norm D-vector: the last token plus a pooled context term
        """
        length = embeddings.shape[0]
        if not 1 <= length <= CONTEXT_LENGTH:
            raise ValueError(f"Sequence length {length} outside [1, {CONTEXT_LENGTH}]")
        hidden = torch.tanh(embeddings @ self.mix + self.position[:length])
        pooled = hidden.mean(dim=0) @ self.readout
        return F.normalize(embeddings[-1] + pooled, dim=-1)

    def encode_text(self, text: str) -> torch.Tensor:
        with torch.no_grad():
            return self.encode_embeddings(self.embed_tokens(self.tokenize(text)))

    def encode_texts(self, texts: Sequence[str]) -> torch.Tensor:
        return torch.stack([self.encode_text(t) for t in texts])
