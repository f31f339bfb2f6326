"""
Learned prompt contexts for vl-distill
Trainable context tokens prepended to label tokens and run through a frozen text encoder
"""

from typing import List, Protocol, Sequence, Tuple, runtime_checkable

import torch
import torch.nn as nn

from src.core.embedding import FeatureKind, FeatureMatrix
from src.core.errors import EncoderLacksTokenAccess

DEFAULT_CONTEXT_TOKENS = 8


@runtime_checkable
class TokenAccessEncoder(Protocol):
    """Text encoder that accepts token embeddings instead of strings"""

    token_dim: int

    def tokenize(self, text: str) -> torch.Tensor: ...

    def embed_tokens(self, token_ids: torch.Tensor) -> torch.Tensor: ...

    def encode_embeddings(self, embeddings: torch.Tensor) -> torch.Tensor: ...


class LearnedPrompt(nn.Module):
    """M learnable context token embeddings inserted as a prefix"""

    def __init__(self, token_dim: int, num_tokens: int = DEFAULT_CONTEXT_TOKENS, init_std: float = 0.02,
                 seed: int = 0):
        """
        Initialize the context

        Args:
            token_dim: Token embedding width of the text encoder
            num_tokens: Number of context tokens M (>= 1)
            init_std: Std of the normal init; 0 gives a zero context
            seed: Seed of the init
        """
        super().__init__()
        if num_tokens < 1:
            raise ValueError(f"Learned prompt needs at least one context token, got {num_tokens}")
        generator = torch.Generator().manual_seed(seed)
        context = torch.randn(num_tokens, token_dim, generator=generator, dtype=torch.float64) * init_std
        self.context = nn.Parameter(context)

    @property
    def num_tokens(self) -> int:
        return self.context.shape[0]


def _check_token_access(text_encoder):
    if not isinstance(text_encoder, TokenAccessEncoder):
        raise EncoderLacksTokenAccess(
            f"{type(text_encoder).__name__} only maps strings to vectors; learned prompts need token-level access"
        )


def encode_learned_prompt(prompt: LearnedPrompt, label: str, text_encoder) -> torch.Tensor:
    """
    Text feature of [context tokens; label tokens] through the frozen encoder

    Args:
        prompt: Learned context
        label: Class name
        text_encoder: Encoder with token-level input access

    Returns:
        Unit-norm D-vector, differentiable with respect to the context only
    """
    _check_token_access(text_encoder)
    with torch.no_grad():
        label_embeddings = text_encoder.embed_tokens(text_encoder.tokenize(label))
    sequence = torch.cat([prompt.context, label_embeddings.to(prompt.context.dtype)], dim=0)
    return text_encoder.encode_embeddings(sequence)


def encode_label_set(prompt: LearnedPrompt, labels: Sequence[str], text_encoder) -> torch.Tensor:
    """Stacked learned-prompt features, one row per label"""
    return torch.stack([encode_learned_prompt(prompt, label, text_encoder) for label in labels])


def as_feature_matrix(features: torch.Tensor, labels: Sequence[str]) -> FeatureMatrix:
    return FeatureMatrix(features.detach().cpu().numpy(), tuple(labels), FeatureKind.TEXT)


class DualPrompt(nn.Module):
    """Common positive and negative contexts for multi-label prediction"""

    def __init__(self, token_dim: int, num_tokens: int = DEFAULT_CONTEXT_TOKENS, seed: int = 0):
        super().__init__()
        self.positive = LearnedPrompt(token_dim, num_tokens, seed=seed)
        self.negative = LearnedPrompt(token_dim, num_tokens, seed=seed + 1)

    def encode(self, labels: Sequence[str], text_encoder) -> Tuple[torch.Tensor, torch.Tensor]:
        """
        Positive and negative prompt features for every label

        Args:
            labels: Class names
            text_encoder: Token-level text encoder

        Returns:
            Tuple of (L x D positive features, L x D negative features)
        """
        return encode_label_set(self.positive, labels, text_encoder), encode_label_set(self.negative, labels, text_encoder)

    def feature_matrices(self, labels: List[str], text_encoder) -> Tuple[FeatureMatrix, FeatureMatrix]:
        pos, neg = self.encode(labels, text_encoder)
        return as_feature_matrix(pos, labels), as_feature_matrix(neg, labels)
