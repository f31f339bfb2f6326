"""
Label descriptions for vl-distill
Append-only description cache, description generation and label-text building
"""

import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

from tqdm import tqdm

from src.core.errors import CacheConflict, CacheCorrupt, EmptyGeneration, MissingDescription
from src.enrichment.prompts import (
    DESCRIPTION_SEPARATOR,
    ENRICHED_PROMPT,
    PLAIN_PROMPT,
    PromptStyle,
    instruction_for,
)
from src.enrichment.tokenizer import CONTEXT_LENGTH, TokenCounter, fit_description
from src.utils.logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class DescriptionEntry:
    """One cached description"""

    label: str
    style: str
    generator_id: str
    description: str
    timestamp: str

    @property
    def key(self) -> Tuple[str, str, str]:
        return (self.label, self.style, self.generator_id)


class DescriptionCache:
    """Descriptions keyed by (label, style, generator id), persisted as JSON lines"""

    def __init__(self, path: Optional[str] = None):
        """
        Initialize the cache

        Args:
            path: JSON-lines file; None keeps the cache in memory only
        """
        self.path = Path(path) if path else None
        self._entries: Dict[Tuple[str, str, str], DescriptionEntry] = {}
        self._lock = threading.Lock()
        if self.path and self.path.exists():
            self._load()

    def _load(self):
        with open(self.path, "r", encoding="utf-8") as f:
            for line_number, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    entry = DescriptionEntry(**json.loads(line))
                except (json.JSONDecodeError, TypeError) as e:
                    raise CacheCorrupt(f"Bad description record at {self.path}:{line_number}: {e}")
                self._entries.setdefault(entry.key, entry)
        logger.debug(f"Loaded {len(self._entries)} descriptions from {self.path}")

    def __len__(self) -> int:
        return len(self._entries)

    def entries(self) -> List[DescriptionEntry]:
        return list(self._entries.values())

    def entry(self, label: str, style: str, generator_id: str) -> Optional[DescriptionEntry]:
        return self._entries.get((label, PromptStyle(style).value, generator_id))

    def get(self, label: str, style: str, generator_id: Optional[str] = None) -> Optional[str]:
        """
        Look up a description

        Args:
            label: Class name
            style: Prompt style
            generator_id: Generator to match; None takes the first entry recorded for (label, style)

        Returns:
            Description text, or None on a miss
        """
        style = PromptStyle(style).value
        if generator_id is not None:
            entry = self._entries.get((label, style, generator_id))
            return entry.description if entry else None
        for entry in self._entries.values():
            if entry.label == label and entry.style == style:
                return entry.description
        return None

    def put(self, label: str, style: str, generator_id: str, description: str) -> DescriptionEntry:
        """
        Add an entry; re-adding the same text is a no-op, different text is a conflict

        Args:
            label: Class name
            style: Prompt style
            generator_id: Generator that produced the text
            description: Description text

        Returns:
            The stored entry
        """
        style = PromptStyle(style).value
        with self._lock:
            existing = self._entries.get((label, style, generator_id))
            if existing is not None:
                if existing.description != description:
                    raise CacheConflict(
                        f"Description for ({label}, {style}, {generator_id}) already cached with different text",
                        label=label, style=style,
                    )
                return existing

            entry = DescriptionEntry(label, style, generator_id, description,
                                     datetime.now(timezone.utc).isoformat(timespec="seconds"))
            if self.path:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                line = json.dumps(asdict(entry), sort_keys=True, ensure_ascii=False) + "\n"
                with open(self.path, "a", encoding="utf-8") as f:
                    f.write(line)
                    f.flush()
            self._entries[entry.key] = entry
            return entry


def build_label_text(
    label: str,
    style: PromptStyle,
    cache: Optional[DescriptionCache] = None,
    generator_id: Optional[str] = None,
    limit: int = CONTEXT_LENGTH,
    counter: Optional[TokenCounter] = None,
) -> str:
    """
    Build l(y) for one label

    Args:
        label: Class name
        style: Prompt style
        cache: Description cache (required for enriched styles)
        generator_id: Restrict to descriptions from this generator
        limit: Text encoder token limit
        counter: Token counter

    Returns:
        "A photo of a {label}" for plain, else "a photo of {label}, {description}" trimmed to the limit
    """
    style = PromptStyle(style)
    if not style.enriched:
        return PLAIN_PROMPT.format(label=label)

    description = cache.get(label, style, generator_id) if cache is not None else None
    if description is None:
        raise MissingDescription(label, style.value)
    return fit_description(ENRICHED_PROMPT.format(label=label), description, DESCRIPTION_SEPARATOR, limit, counter)


def build_label_texts(labels: Iterable[str], style: PromptStyle, cache: Optional[DescriptionCache] = None,
                      generator_id: Optional[str] = None, counter: Optional[TokenCounter] = None) -> Dict[str, str]:
    return {label: build_label_text(label, style, cache, generator_id, counter=counter) for label in labels}


def generate_descriptions(
    labels: Iterable[str],
    style: PromptStyle,
    client,
    cache: DescriptionCache,
    workers: int = 4,
    progress: bool = False,
) -> List[DescriptionEntry]:
    """
    Generate and cache one description per label

    Cached labels are not sent to the client. Client calls run concurrently;
    cache writes happen one at a time in label order.

    Args:
        labels: Class names
        style: Enriched prompt style
        client: Generator with generate(instruction) and client_id
        cache: Description cache
        workers: Concurrent client calls
        progress: Show a progress bar

    Returns:
        Entries for every label (cached or new)
    """
    style = PromptStyle(style)
    labels = list(labels)
    generator_id = client.client_id
    missing = [label for label in labels if cache.get(label, style, generator_id) is None]
    logger.info(f"Descriptions for {len(labels)} labels ({style.value}): "
                f"{len(labels) - len(missing)} cached, {len(missing)} to generate with {generator_id}")

    if missing:
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            texts = list(tqdm(
                pool.map(lambda label: client.generate(instruction_for(label, style)), missing),
                total=len(missing), desc=f"describe[{style.value}]", disable=not progress,
            ))

        empty = None
        for label, text in zip(missing, texts):
            text = (text or "").strip()
            if not text:
                empty = empty or label
                continue
            cache.put(label, style.value, generator_id, text)
        if empty is not None:
            raise EmptyGeneration(empty)

    return [cache.entry(label, style, generator_id) for label in labels]


def attach_label_texts(
    label_space,
    teacher,
    style: PromptStyle,
    cache: Optional[DescriptionCache] = None,
    generator_id: Optional[str] = None,
    counter: Optional[TokenCounter] = None,
):
    """
    Build l(y) for every label and resolve its teacher text feature into the label space

    Args:
        label_space: LabelSpace to update in place
        teacher: Teacher provider
        style: Prompt style
        cache: Description cache (required for enriched styles)
        generator_id: Restrict to descriptions from this generator
        counter: Token counter for the length limit

    Returns:
        The label space
    """
    style = PromptStyle(style)
    texts = build_label_texts(label_space.all_labels, style, cache, generator_id, counter)
    features = teacher.text_features(list(texts.values()))
    for (label, text), row in zip(texts.items(), features.data):
        label_space.descriptions.setdefault(label, {})[style.value] = text
        label_space.text_features[label] = row
    logger.info(f"Resolved {len(texts)} label texts in style {style.value}")
    return label_space
