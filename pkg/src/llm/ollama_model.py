"""
HTTP Clients for vl-distill
Description generation and image captioning over an HTTP endpoint (Ollama-style chat API)
"""

import base64
from pathlib import Path
from typing import Any, Dict, Optional

import requests

from src.core.errors import ClientUnavailable
from src.utils.logger import get_logger

logger = get_logger(__name__)


class OllamaClient:
    """Description generator for models served behind an Ollama-compatible endpoint"""

    def __init__(
        self,
        model_name: str = "llama3.1",
        base_url: str = "http://localhost:11434",
        temperature: float = 0.7,
        max_tokens: int = 128,
        timeout: float = 120,
    ):
        """
        Initialize Ollama client

        Args:
            model_name: Name of the model to use
            base_url: API base URL
            temperature: Sampling temperature
            max_tokens: Maximum tokens to generate
            timeout: Request timeout in seconds
        """
        self.model_name = model_name
        self.base_url = base_url.rstrip("/")
        self.api_url = f"{self.base_url}/api"
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.timeout = timeout
        logger.info(f"Initialized Ollama client with model {model_name} at {self.api_url}")

    @property
    def client_id(self) -> str:
        return f"ollama:{self.model_name}:t{self.temperature}"

    def _chat(self, message: Dict[str, Any]) -> str:
        try:
            response = requests.post(
                f"{self.api_url}/chat",
                json={
                    "model": self.model_name,
                    "messages": [message],
                    "stream": False,
                    "options": {
                        "temperature": self.temperature,
                        "num_predict": self.max_tokens,
                    },
                },
                timeout=self.timeout,
            )
            response.raise_for_status()
            result = response.json()
        except requests.exceptions.ConnectionError:
            raise ClientUnavailable(f"Could not connect to {self.base_url}", client=self.client_id)
        except requests.exceptions.Timeout:
            raise ClientUnavailable(f"Request to {self.base_url} timed out", client=self.client_id)
        except (requests.exceptions.RequestException, ValueError) as e:
            raise ClientUnavailable(f"Request to {self.base_url} failed: {e}", client=self.client_id)

        return str(result.get("message", {}).get("content", "")).strip()

    def generate(self, instruction: str) -> str:
        """
        Generate text for an instruction

        Args:
            instruction: Filled prompt-style template

        Returns:
            Generated text (stripped)
        """
        return self._chat({"role": "user", "content": instruction})

    def test_connection(self) -> bool:
        """
        Test if the endpoint is running and accessible

        Returns:
            True if connection successful, False otherwise
        """
        try:
            response = requests.get(f"{self.api_url}/tags", timeout=5)
            response.raise_for_status()
            return True
        except requests.exceptions.RequestException as e:
            logger.warning(f"Connection to {self.base_url} failed: {e}")
            return False


class HttpCaptioner(OllamaClient):
    """Image captioner using a multimodal model behind the same chat API"""

    CAPTION_INSTRUCTION = "Describe this image in one short sentence."

    def __init__(self, model_name: str = "llava", base_url: str = "http://localhost:11434", **kwargs):
        super().__init__(model_name=model_name, base_url=base_url, **kwargs)

    @property
    def client_id(self) -> str:
        return f"captioner:{self.model_name}"

    def caption(self, sample_id: str, image_ref: Optional[str]) -> str:
        """
        Caption one image

        Args:
            sample_id: Sample identifier
            image_ref: Path to the image file

        Returns:
            Caption text
        """
        if not image_ref or not Path(image_ref).exists():
            raise ClientUnavailable(f"No image available for sample '{sample_id}'", sample_id=sample_id)
        encoded = base64.b64encode(Path(image_ref).read_bytes()).decode("ascii")
        return self._chat({"role": "user", "content": self.CAPTION_INSTRUCTION, "images": [encoded]})
