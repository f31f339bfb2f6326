"""
Batch samplers for vl-distill
Shuffled base batches and balanced base/few-shot batches
"""

from typing import Iterator, List, Tuple

import numpy as np

from src.core.errors import ConfigInvalid, EmptyFewshotPool


def base_batches(size: int, batch_size: int, rng: np.random.Generator) -> List[np.ndarray]:
    """One shuffled pass over `size` samples in chunks of batch_size"""
    order = rng.permutation(size)
    return [order[i:i + batch_size] for i in range(0, size, batch_size)]


class BalancedBatchSampler:
    """
    Each batch holds ceil(B/2) base samples and at most floor(B/2) few-shot samples.

    Few-shot samples are walked without replacement; when a pass over the pool runs
    out, the current batch takes what is left and the pool is reshuffled for the next one.
    """

    def __init__(self, base_size: int, fewshot_size: int, batch_size: int, seed: int = 0):
        if batch_size < 2:
            raise ConfigInvalid(f"Balanced batches need batch_size >= 2, got {batch_size}")
        if fewshot_size < 1:
            raise EmptyFewshotPool("Few-shot pool is empty")
        if base_size < 1:
            raise ConfigInvalid("Balanced batches need at least one base sample")
        self.base_size = base_size
        self.fewshot_size = fewshot_size
        self.base_per_batch = (batch_size + 1) // 2
        self.fewshot_per_batch = batch_size // 2
        self.rng = np.random.default_rng(seed)
        self._pool = np.empty(0, dtype=np.int64)

    def __len__(self) -> int:
        return -(-self.base_size // self.base_per_batch)

    def _take_fewshot(self) -> np.ndarray:
        if self._pool.size == 0:
            self._pool = self.rng.permutation(self.fewshot_size)
        picked, self._pool = self._pool[:self.fewshot_per_batch], self._pool[self.fewshot_per_batch:]
        return picked

    def epoch(self) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        """Yield (base indices, few-shot indices) for one pass over the base set"""
        for base in base_batches(self.base_size, self.base_per_batch, self.rng):
            yield base, self._take_fewshot()
