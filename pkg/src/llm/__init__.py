"""
LLM module for loading description generators and captioners
"""

from .model_loader import ModelLoader, load_client_from_config
from .fixture_client import FixtureCaptioner, FixtureClient
from .ollama_model import HttpCaptioner, OllamaClient
from .groq_llama_model import GroqLlamaClient

__all__ = ['ModelLoader', 'load_client_from_config', 'FixtureClient', 'FixtureCaptioner',
           'OllamaClient', 'HttpCaptioner', 'GroqLlamaClient']
