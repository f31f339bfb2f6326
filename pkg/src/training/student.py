"""
Student image encoder for vl-distill
Pluggable backbone followed by a linear projection to the teacher width and L2 normalization
"""

import hashlib
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from src.core.embedding import FeatureKind, FeatureMatrix


class StudentModel(nn.Module):
    """S(x) = normalize(W backbone(x) + b)"""

    def __init__(self, backbone: nn.Module, backbone_dim: int, embed_dim: int):
        super().__init__()
        self.backbone = backbone
        self.projection = nn.Linear(backbone_dim, embed_dim)
        self.embed_dim = embed_dim

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.normalize(self.projection(self.backbone(x)), dim=-1)

    @property
    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def features(self, inputs: np.ndarray, ids: Sequence[str]) -> FeatureMatrix:
        """Student features of an input matrix, no gradient"""
        was_training = self.training
        self.eval()
        with torch.no_grad():
            out = self(torch.as_tensor(inputs, dtype=torch.float64))
        self.train(was_training)
        return FeatureMatrix(out.numpy(), tuple(ids), FeatureKind.STUDENT_VISUAL)


def mlp_backbone(input_dim: int, hidden: Sequence[int] = (64,)) -> nn.Module:
    """Tiny MLP backbone; no hidden layers gives an identity (linear student)"""
    layers = []
    width = input_dim
    for size in hidden:
        layers += [nn.Linear(width, size), nn.ReLU()]
        width = size
    return nn.Sequential(*layers) if layers else nn.Identity()


def build_student(input_dim: int, embed_dim: int, hidden: Sequence[int] = (64,), seed: Optional[int] = 0) -> StudentModel:
    """
    MLP student in float64

    Args:
        input_dim: Width of the student input vectors
        embed_dim: Teacher embedding width D
        hidden: Hidden layer widths of the backbone
        seed: Initialization seed (None keeps the global torch RNG state)

    Returns:
        StudentModel
    """
    if seed is not None:
        torch.manual_seed(seed)
    hidden = tuple(hidden)
    backbone_dim = hidden[-1] if hidden else input_dim
    return StudentModel(mlp_backbone(input_dim, hidden), backbone_dim, embed_dim).double()


def parameter_checksum(model: nn.Module) -> str:
    """SHA-256 over every parameter and buffer, in state-dict order"""
    digest = hashlib.sha256()
    for name, tensor in model.state_dict().items():
        digest.update(name.encode("utf-8"))
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()
