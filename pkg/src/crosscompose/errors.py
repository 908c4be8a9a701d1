"""Exception types shared across modules."""

from __future__ import annotations


class CapabilityError(RuntimeError):
    """A backbone was asked for an operation it does not support."""


class BackboneUnavailableError(RuntimeError):
    """The requested backbone cannot run here (missing weights or runtime)."""


class TrainingDivergedError(RuntimeError):
    """Training hit a non-finite loss. Carries the last stable checkpoint."""

    def __init__(self, message: str, checkpoint=None, history=None):
        super().__init__(message)
        self.checkpoint = checkpoint
        self.history = history or []


class StageError(RuntimeError):
    """A pipeline stage failed. Keeps the stage tag and any partial artifacts."""

    def __init__(self, stage: str, message: str = "", step: int | None = None, partial=None):
        detail = f"stage {stage!r} failed"
        if step is not None:
            detail += f" at step {step}"
        if message:
            detail += f": {message}"
        super().__init__(detail)
        self.stage = stage
        self.step = step
        self.partial = partial
