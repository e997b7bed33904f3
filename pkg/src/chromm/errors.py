"""Exception types shared across the pipeline stages."""


class ChrommError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(ChrommError):
    """Invalid or inconsistent configuration (CLI exit code 2)."""


class InvalidDepth(ChrommError):
    """Unprojection requested with a non-positive final depth."""


class NeedFallback(ChrommError):
    """Triangulation called with fewer than two rays; caller must fall back."""


class DegenerateRays(ChrommError):
    """Ray bundle too close to parallel for a stable triangulation."""


class DegenerateAverage(ChrommError):
    """Quaternion mean vanished (antipodal cancellation)."""


class DegenerateAlignment(ChrommError):
    """Point sets too small or rank-deficient for a similarity fit."""


class BehindCamera(ChrommError):
    """A joint required for projection has non-positive camera depth."""


class NoValidPairs(ChrommError):
    """Scale adjustment found no usable head-pelvis ratio pairs."""


class StitchFailure(ChrommError):
    """Adjacent chunks share too little camera geometry to align."""

    def __init__(self, left_chunk: int, right_chunk: int, reason: str):
        self.left_chunk = left_chunk
        self.right_chunk = right_chunk
        super().__init__(
            f"cannot stitch chunk {left_chunk} to chunk {right_chunk}: {reason}"
        )


class EvaluationError(ChrommError):
    """Predictions and ground truth cannot be put in correspondence (exit 4)."""


class PipelineStageError(ChrommError):
    """A pipeline stage failed; carries the stage name for the CLI (exit 3)."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"stage '{stage}': {message}")
