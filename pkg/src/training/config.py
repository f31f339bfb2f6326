"""
Training configuration for vl-distill
Validated training and retrieval settings, optimizers and learning-rate schedules
"""

from typing import Dict, List, Literal

import torch
from pydantic import Field, field_validator

from src.core.embedding import LOSS_NAMES, LossConfig
from src.utils.config import ValidatedModel

STEP_DECAY = 0.1


class TrainConfig(ValidatedModel):
    """Epochs, batching, optimizer, schedule, enabled losses and seed"""

    epochs: int = Field(450, ge=0)
    batch_size: int = Field(128, ge=1)
    optimizer: Literal["sgd", "adam"] = "sgd"
    lr: float = Field(0.05, gt=0)
    momentum: float = Field(0.9, ge=0)
    weight_decay: float = Field(0.0, ge=0)
    schedule: Literal["step", "onecycle", "constant"] = "step"
    peak_lr: float = Field(0.0002, gt=0)
    losses: List[str] = Field(default_factory=lambda: ["cls"])
    loss: LossConfig = Field(default_factory=LossConfig)
    seed: int = 0
    prompt_learning: bool = False
    prompt_tokens: int = Field(8, ge=1)
    prompt_lr: float = Field(0.002, gt=0)
    eval_every: int = Field(0, ge=0)
    progress: bool = False

    @field_validator("losses")
    @classmethod
    def _known_losses(cls, value: List[str]) -> List[str]:
        unknown = [name for name in value if name not in LOSS_NAMES]
        if unknown:
            raise ValueError(f"unknown losses {unknown}; choose from {list(LOSS_NAMES)}")
        if len(set(value)) != len(value):
            raise ValueError("losses listed twice")
        return value

    @property
    def weights(self) -> Dict[str, float]:
        return {name: self.loss.weight(name) for name in self.losses}

    @property
    def active_losses(self) -> List[str]:
        """Enabled losses with a nonzero weight"""
        return [name for name in self.losses if self.loss.weight(name) != 0.0]


class RetrievalConfig(ValidatedModel):
    """Cache-term weight alpha and sharpness beta of the training-free few-shot classifier"""

    alpha: float = Field(1.0, ge=0)
    beta: float = Field(5.5, gt=0)


def finetune_config(base: TrainConfig, large_dataset: bool = False, vit_student: bool = False, **overrides) -> TrainConfig:
    """
    Few-shot finetuning defaults derived from a base config

    Args:
        base: Base training config (losses, loss settings and seed are kept)
        large_dataset: 20 epochs instead of 100
        vit_student: Peak learning rate 0.0001 instead of 0.003
        **overrides: Explicit field values

    Returns:
        TrainConfig with a one-cycle schedule
    """
    values = base.model_dump()
    values.update(epochs=20 if large_dataset else 100, schedule="onecycle",
                  peak_lr=0.0001 if vit_student else 0.003, prompt_learning=False)
    return TrainConfig.parse(values, **overrides)


def build_optimizer(params, config: TrainConfig) -> torch.optim.Optimizer:
    """SGD (with momentum) or Adam over the given parameters"""
    lr = config.peak_lr if config.schedule == "onecycle" else config.lr
    if config.optimizer == "adam":
        return torch.optim.Adam(params, lr=lr, weight_decay=config.weight_decay)
    return torch.optim.SGD(params, lr=lr, momentum=config.momentum, weight_decay=config.weight_decay)


def build_scheduler(optimizer: torch.optim.Optimizer, config: TrainConfig, steps_per_epoch: int):
    """
    Per-step learning-rate schedule

    step: x0.1 after 1/3 and again after 2/3 of the epochs; onecycle: torch's
    one-cycle policy peaking at peak_lr; constant: unchanged.
    """
    total_steps = max(1, config.epochs * steps_per_epoch)
    if config.schedule == "onecycle":
        return torch.optim.lr_scheduler.OneCycleLR(optimizer, max_lr=config.peak_lr, total_steps=total_steps)
    if config.schedule == "constant":
        return torch.optim.lr_scheduler.LambdaLR(optimizer, lambda step: 1.0)

    milestones = [config.epochs // 3 * steps_per_epoch, 2 * config.epochs // 3 * steps_per_epoch]
    return torch.optim.lr_scheduler.LambdaLR(
        optimizer, lambda step: STEP_DECAY ** sum(step >= m for m in milestones if m > 0)
    )
