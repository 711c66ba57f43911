"""
Error types for the triple set prediction engine
Every error carries the process exit code the CLI reports for it
"""


class KGDiffError(Exception):
    """Base class for all engine errors"""
    exit_code = 4


# Config errors (exit 2)

class ConfigError(KGDiffError):
    """Invalid or incomplete run configuration"""
    exit_code = 2

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


# Artifact mismatches (exit 3)

class ArtifactMismatch(KGDiffError):
    exit_code = 3


class DatasetMismatch(ArtifactMismatch):
    """Checkpoint vocabulary fingerprint differs from the loaded dataset"""


class WrongCheckpointMode(ArtifactMismatch):
    """Checkpoint was trained in a mode the requested sampler cannot use"""


class CorruptCheckpoint(ArtifactMismatch):
    """Checkpoint file is truncated or malformed"""


# Runtime failures (exit 4)

class EmptyDataset(KGDiffError):
    pass


class InvalidId(KGDiffError):
    pass


class InvalidSubset(KGDiffError):
    pass


class ParseError(KGDiffError):
    """Malformed line in a triple or similarity file"""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class IoError(KGDiffError, OSError):
    pass


class InvalidRho(KGDiffError):
    pass


class InvalidSteps(KGDiffError):
    pass


class InvalidStep(KGDiffError):
    pass


class InvalidProbability(KGDiffError):
    pass


class InvalidDim(KGDiffError):
    pass


class IncompatibleGraphs(KGDiffError):
    pass


class DegenerateDataset(KGDiffError):
    pass


class EmptyLossSupport(KGDiffError):
    pass


class EmptyTestSet(KGDiffError):
    pass


class InvalidSimilarity(KGDiffError):
    pass
