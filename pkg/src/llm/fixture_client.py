"""
Fixture Clients for vl-distill
Replays recorded request -> response tables so enrichment runs are deterministic offline
"""

import hashlib
import json
from pathlib import Path
from typing import Dict, Optional

from src.core.errors import ClientUnavailable, InputMissing
from src.utils.logger import get_logger

logger = get_logger(__name__)


def load_fixture_table(path: str) -> Dict[str, str]:
    """
    Read a JSON-lines table of {"request": ..., "response": ...} records

    Args:
        path: Fixture file path

    Returns:
        Dict mapping request text to recorded response
    """
    fixture_path = Path(path)
    if not fixture_path.exists():
        raise InputMissing(f"Fixture file not found: {path}", path=str(path))

    table: Dict[str, str] = {}
    with open(fixture_path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                table[record["request"]] = record["response"]
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise InputMissing(f"Bad fixture record at {path}:{line_number}: {e}", path=str(path))
    logger.debug(f"Loaded {len(table)} fixture records from {path}")
    return table


class FixtureClient:
    """Description generator answering from a recorded table"""

    def __init__(self, fixture_path: str, table: Optional[Dict[str, str]] = None):
        self.fixture_path = fixture_path
        self.table = table if table is not None else load_fixture_table(fixture_path)
        digest = hashlib.sha256(json.dumps(self.table, sort_keys=True).encode("utf-8")).hexdigest()[:12]
        self._client_id = f"fixture:{digest}"

    @property
    def client_id(self) -> str:
        return self._client_id

    def generate(self, instruction: str) -> str:
        if instruction not in self.table:
            raise ClientUnavailable(f"No recorded response for request: {instruction[:80]}", client=self.client_id)
        return self.table[instruction]


class FixtureCaptioner(FixtureClient):
    """Captioner answering from a table keyed by sample id"""

    @property
    def client_id(self) -> str:
        return self._client_id.replace("fixture:", "fixture-captions:", 1)

    def caption(self, sample_id: str, image_ref: Optional[str] = None) -> str:
        return self.generate(sample_id)
