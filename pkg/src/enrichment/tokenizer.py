"""
Token counting for label text
Counts tokens the way the teacher's text encoder sees them and trims descriptions to fit
"""

import re
from functools import lru_cache
from typing import List, Optional, Protocol, Tuple

from src.utils.logger import get_logger

logger = get_logger(__name__)

CONTEXT_LENGTH = 77

# Pre-tokenization pattern of CLIP-style byte-pair tokenizers, one token per span
_SPAN_PATTERN = re.compile(r"'s|'t|'re|'ve|'m|'ll|'d|[^\W\d_]+|\d|[^\s\w]+|_", re.IGNORECASE)


class TokenCounter(Protocol):
    name: str

    def count(self, text: str) -> int: ...


class SpanTokenCounter:
    """One token per pre-tokenization span, plus start and end markers"""

    name = "span"
    special_tokens = 2

    def spans(self, text: str) -> List[Tuple[int, int]]:
        return [m.span() for m in _SPAN_PATTERN.finditer(text)]

    def count(self, text: str) -> int:
        return len(self.spans(text)) + self.special_tokens


class OpenClipTokenCounter:
    """Exact byte-pair counts from open_clip's tokenizer (optional dependency)"""

    name = "open_clip"
    special_tokens = 2

    def __init__(self):
        from open_clip.tokenizer import SimpleTokenizer

        self._tokenizer = SimpleTokenizer()

    def count(self, text: str) -> int:
        return len(self._tokenizer.encode(text)) + self.special_tokens


@lru_cache(maxsize=1)
def default_token_counter() -> TokenCounter:
    """open_clip's byte-pair counter when open_clip imports, the span counter otherwise"""
    try:
        counter = OpenClipTokenCounter()
    except ImportError:
        logger.debug("open_clip not installed; counting tokens by pre-tokenization span")
        return SpanTokenCounter()
    logger.debug("Counting tokens with open_clip's byte-pair tokenizer")
    return counter


def fit_description(
    base: str,
    description: str,
    separator: str = ", ",
    limit: int = CONTEXT_LENGTH,
    counter: Optional[TokenCounter] = None,
) -> str:
    """
    Join base prompt and description, trimming the description tail to the token limit

    The base prompt is never cut. Cuts fall on span boundaries, so with the span
    counter an over-long result lands exactly on the limit.

    Args:
        base: Base prompt ("a photo of lotus")
        description: Generated description
        separator: Joiner between prompt and description
        limit: Maximum token count including start/end markers
        counter: Token counter (default: default_token_counter())

    Returns:
        Label text within the limit
    """
    counter = counter or default_token_counter()
    full = f"{base}{separator}{description}"
    if counter.count(full) <= limit:
        return full

    ends = [end for _, end in SpanTokenCounter().spans(description)]
    # largest prefix (by span) that still fits
    low, high, best = 0, len(ends) - 1, None
    while low <= high:
        mid = (low + high) // 2
        candidate = f"{base}{separator}{description[:ends[mid]]}"
        if counter.count(candidate) <= limit:
            best, low = candidate, mid + 1
        else:
            high = mid - 1
    return best if best is not None else base
