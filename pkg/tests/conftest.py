"""Shared pytest configuration"""

import logging
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.utils.logger import get_logger  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale training experiments (minutes on CPU)")


@pytest.fixture(autouse=True)
def restore_root_logger():
    """Undo handler and level changes a test leaves on the vl_distill logger"""
    root = get_logger()
    handlers = [(h, h.level) for h in root.handlers]
    level = root.level
    yield
    for handler in list(root.handlers):
        if all(handler is not kept for kept, _ in handlers):
            root.removeHandler(handler)
            if isinstance(handler, logging.FileHandler):
                handler.close()
    for handler, handler_level in handlers:
        handler.setLevel(handler_level)
    root.setLevel(level)
