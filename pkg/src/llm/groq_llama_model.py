"""
Groq Llama Client for vl-distill
Generates label descriptions through Groq's hosted Llama models
"""

import os
from typing import Any, Dict, List, Optional

from groq import Groq

from src.core.errors import ClientUnavailable
from src.utils.logger import get_logger

logger = get_logger(__name__)


class GroqLlamaClient:
    """Description generator backed by Groq chat completions"""

    def __init__(
        self,
        model_name: str = "llama-3.3-70b-versatile",
        api_key: Optional[str] = None,
        temperature: float = 0.7,
        max_tokens: int = 128,
    ):
        """
        Initialize Groq Llama client

        Args:
            model_name: Name of the Groq model to use
            api_key: Groq API key (defaults to GROQ_API_KEY env var)
            temperature: Sampling temperature, recorded in the generator id
            max_tokens: Maximum tokens to generate
        """
        self.model_name = model_name
        self.api_key = api_key or os.getenv("GROQ_API_KEY")
        self.temperature = temperature
        self.max_tokens = max_tokens

        if not self.api_key:
            raise ClientUnavailable("GROQ_API_KEY not found in environment variables")

        self.client = Groq(api_key=self.api_key)
        logger.info(f"Initialized Groq Llama client with model: {model_name}")

    @property
    def client_id(self) -> str:
        return f"groq:{self.model_name}:t{self.temperature}"

    def generate(self, instruction: str) -> str:
        """
        Generate a one-sentence description for an instruction

        Args:
            instruction: Filled prompt-style template

        Returns:
            Generated text (stripped)
        """
        messages: List[Dict[str, str]] = [{"role": "user", "content": instruction}]
        try:
            response = self.client.chat.completions.create(
                model=self.model_name,
                messages=messages,
                temperature=self.temperature,
                max_tokens=self.max_tokens,
            )
        except Exception as e:
            raise ClientUnavailable(f"Groq request failed: {e}", client=self.client_id)

        content = response.choices[0].message.content or ""
        return content.strip()

    def get_model_info(self) -> Dict[str, Any]:
        """
        Get information about the current model

        Returns:
            Dict with model information
        """
        return {
            'model_name': self.model_name,
            'provider': 'Groq',
            'client_id': self.client_id,
            'api_configured': self.api_key is not None,
        }
