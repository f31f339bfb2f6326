"""
Error types for the vl-distill toolkit
Every failure the toolkit reports is a subclass of VLDistillError
"""

from typing import Any, Optional


class VLDistillError(Exception):
    """Base class for all toolkit errors"""

    code = "VLDistillError"
    exit_code = 1

    def __init__(self, message: str = "", **details: Any):
        """
        Initialize the error

        Args:
            message: Human readable message
            **details: Offending values, kept as attributes for callers and the CLI
        """
        super().__init__(message or self.code)
        self.message = message or self.code
        self.details = details
        for key, value in details.items():
            setattr(self, key, value)

    def to_record(self) -> dict:
        """Machine-readable form used by the CLI error line"""
        record = {"code": self.code, "message": self.message}
        for key, value in self.details.items():
            record[key] = value if isinstance(value, (int, float, str, bool)) or value is None else repr(value)
        return record


# embedding-core

class ZeroRow(VLDistillError):
    code = "ZeroRow"

    def __init__(self, index: int):
        super().__init__(f"Row {index} has zero norm and cannot be normalized", index=index)


class DimMismatch(VLDistillError):
    code = "DimMismatch"

    def __init__(self, expected: Any, got: Any, what: str = "dimension"):
        super().__init__(f"{what} mismatch: expected {expected}, got {got}", expected=expected, got=got)


class NonPositiveTemperature(VLDistillError):
    code = "NonPositiveTemperature"

    def __init__(self, tau: float):
        super().__init__(f"Temperature must be > 0, got {tau}", tau=tau)


class IdMismatch(VLDistillError):
    code = "IdMismatch"


class ShapeMismatch(VLDistillError):
    code = "ShapeMismatch"


class LabelSpaceError(VLDistillError):
    code = "LabelSpaceError"


# distill-losses

class LabelOutOfRange(VLDistillError):
    code = "LabelOutOfRange"

    def __init__(self, label: int, num_labels: int):
        super().__init__(f"Label index {label} outside [0, {num_labels})", label=label, num_labels=num_labels)


class MissingWeight(VLDistillError):
    code = "MissingWeight"

    def __init__(self, loss_name: str):
        super().__init__(f"No weight configured for loss '{loss_name}'", loss_name=loss_name)


# alignment-metrics

class KOutOfRange(VLDistillError):
    code = "KOutOfRange"

    def __init__(self, k: int, low: int, high: int):
        super().__init__(f"k={k} outside valid range [{low}, {high}]", k=k, low=low, high=high)


class TooFewRows(VLDistillError):
    code = "TooFewRows"

    def __init__(self, rows: int, minimum: int = 2):
        super().__init__(f"Need at least {minimum} rows, got {rows}", rows=rows, minimum=minimum)


# language-enrichment

class MissingDescription(VLDistillError):
    code = "MissingDescription"

    def __init__(self, label: str, style: str):
        super().__init__(f"No cached '{style}' description for label '{label}'", label=label, style=style)


class ClientUnavailable(VLDistillError):
    code = "ClientUnavailable"


class EmptyGeneration(VLDistillError):
    code = "EmptyGeneration"

    def __init__(self, label: str, what: str = "description"):
        super().__init__(f"Generator returned an empty {what} for '{label}'", label=label)


class EncoderLacksTokenAccess(VLDistillError):
    code = "EncoderLacksTokenAccess"


class CacheConflict(VLDistillError):
    code = "CacheConflict"


# teacher-providers / persistence

class BadSpec(VLDistillError):
    code = "BadSpec"


class CacheCorrupt(VLDistillError):
    code = "CacheCorrupt"
    exit_code = 4


class VersionUnsupported(VLDistillError):
    code = "VersionUnsupported"
    exit_code = 4

    def __init__(self, version: int, supported: int):
        super().__init__(f"Cache format version {version} not supported (expected {supported})",
                         version=version, supported=supported)


class MissingSample(VLDistillError):
    code = "MissingSample"

    def __init__(self, sample_id: str):
        super().__init__(f"Unknown sample id '{sample_id}'", sample_id=sample_id)


class MissingText(VLDistillError):
    code = "MissingText"

    def __init__(self, text: str):
        super().__init__(f"No text feature for '{text}'", text=text)


# trainer

class MissingCaptions(VLDistillError):
    code = "MissingCaptions"


class DivergedLoss(VLDistillError):
    code = "DivergedLoss"

    def __init__(self, epoch: int, step: int, values: dict, dump_path: Optional[str] = None):
        super().__init__(
            f"Non-finite loss at epoch {epoch} step {step}: {values}",
            epoch=epoch, step=step, values=values, dump_path=dump_path,
        )


class EmptyFewshotPool(VLDistillError):
    code = "EmptyFewshotPool"


class EmptyCache(VLDistillError):
    code = "EmptyCache"


class UnknownSplit(VLDistillError):
    code = "UnknownSplit"

    def __init__(self, split: str):
        super().__init__(f"Unknown split '{split}' (expected train, id or ood)", split=split)


class OverlappingSplits(VLDistillError):
    code = "OverlappingSplits"


# dataset-splits

class TooFewLabels(VLDistillError):
    code = "TooFewLabels"

    def __init__(self, count: int):
        super().__init__(f"Need at least 2 labels to split, got {count}", count=count)


class EmptyClass(VLDistillError):
    code = "EmptyClass"

    def __init__(self, label: str):
        super().__init__(f"Class '{label}' has no samples", label=label)


# cli

class ConfigInvalid(VLDistillError):
    code = "ConfigInvalid"
    exit_code = 2


class InputMissing(VLDistillError):
    code = "InputMissing"
    exit_code = 3
