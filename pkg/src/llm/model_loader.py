"""
Model Loader for vl-distill
Factory for description generators and captioners
"""

from typing import Any, Dict, Optional

from src.core.errors import ConfigInvalid
from src.llm.fixture_client import FixtureCaptioner, FixtureClient
from src.llm.groq_llama_model import GroqLlamaClient
from src.llm.ollama_model import HttpCaptioner, OllamaClient


class ModelLoader:
    """Factory class for loading LLM and captioner clients"""

    SUPPORTED_CLIENTS = ('groq', 'ollama', 'fixture')

    DEFAULT_MODELS = {
        'groq': 'llama-3.3-70b-versatile',
        'ollama': 'llama3.1',
        'fixture': None,
    }

    @staticmethod
    def load_model(client_type: str, model_name: Optional[str] = None, **kwargs):
        """
        Load a description generator

        Args:
            client_type: 'groq', 'ollama' or 'fixture'
            model_name: Specific model name (optional)
            **kwargs: api_key, base_url, fixture_path, temperature, max_tokens

        Returns:
            Client with generate(instruction) and client_id
        """
        client_type = client_type.lower()
        sampling = {k: kwargs[k] for k in ('temperature', 'max_tokens') if kwargs.get(k) is not None}

        if client_type == 'groq':
            return GroqLlamaClient(
                model_name=model_name or ModelLoader.DEFAULT_MODELS['groq'],
                api_key=kwargs.get('api_key'),
                **sampling,
            )

        elif client_type == 'ollama':
            return OllamaClient(
                model_name=model_name or ModelLoader.DEFAULT_MODELS['ollama'],
                base_url=kwargs.get('base_url') or 'http://localhost:11434',
                **sampling,
            )

        elif client_type == 'fixture':
            if not kwargs.get('fixture_path'):
                raise ConfigInvalid("Fixture client needs a fixture path")
            return FixtureClient(kwargs['fixture_path'])

        raise ConfigInvalid(
            f"Unsupported client type: {client_type}. Supported types: {list(ModelLoader.SUPPORTED_CLIENTS)}"
        )

    @staticmethod
    def load_captioner(client_type: str, model_name: Optional[str] = None, **kwargs):
        """
        Load an image captioner

        Args:
            client_type: 'ollama' (HTTP) or 'fixture'
            model_name: Captioning model name
            **kwargs: base_url, fixture_path

        Returns:
            Client with caption(sample_id, image_ref) and client_id
        """
        client_type = client_type.lower()
        if client_type == 'fixture':
            if not kwargs.get('fixture_path'):
                raise ConfigInvalid("Fixture captioner needs a fixture path")
            return FixtureCaptioner(kwargs['fixture_path'])
        if client_type in ('ollama', 'http'):
            return HttpCaptioner(model_name=model_name or 'llava',
                                 base_url=kwargs.get('base_url') or 'http://localhost:11434')
        raise ConfigInvalid(f"Unsupported captioner type: {client_type}")


def load_client_from_config(llm_config: Dict[str, Any], captioner: bool = False):
    """
    Load a client from the 'llm' config section

    Args:
        llm_config: Dict with 'client', 'model_name', 'endpoint', 'fixture_path', ...
        captioner: Load a captioner instead of a description generator

    Returns:
        Client instance
    """
    client_type = llm_config.get('client', 'groq')
    kwargs = {
        'api_key': llm_config.get('groq_api_key'),
        'base_url': llm_config.get('endpoint'),
        'fixture_path': llm_config.get('caption_fixture_path' if captioner else 'fixture_path')
        or llm_config.get('fixture_path'),
        'temperature': llm_config.get('temperature'),
        'max_tokens': llm_config.get('max_tokens'),
    }
    if captioner:
        if client_type == 'groq':
            client_type = 'ollama'
        return ModelLoader.load_captioner(client_type, llm_config.get('caption_model'), **kwargs)
    return ModelLoader.load_model(client_type, llm_config.get('model_name'), **kwargs)
