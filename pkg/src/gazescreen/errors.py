"""Exception hierarchy shared by all pipeline stages."""


class GazeScreenError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(GazeScreenError, ValueError):
    """Input or configuration failed validation; CLI maps these to exit 1."""


# gaze_io
class MalformedHeader(ValidationError):
    pass


class NonMonotonicTimestamp(ValidationError):
    def __init__(self, line: int, message: str | None = None):
        self.line = line
        super().__init__(message or f"t_ms not strictly increasing at line {line}")


class EmptyRecording(ValidationError):
    pass


# geometry / events
class InvalidGeometry(ValidationError):
    pass


class EmptyPointSet(ValidationError):
    pass


class InvalidParameter(ValidationError):
    pass


class InvalidConfig(ValidationError):
    pass


class InvalidProfile(ValidationError):
    pass


# dataset
class UnlabeledImage(ValidationError):
    pass


class DuplicateImageId(ValidationError):
    pass


class ClassTooSmall(ValidationError):
    pass


class EmptyResult(ValidationError):
    pass


# model
class UnsupportedDepth(ValidationError):
    pass


class ShapeMismatch(GazeScreenError):
    def __init__(self, name: str, expected, got):
        self.name = name
        super().__init__(f"tensor {name!r}: expected shape {tuple(expected)}, got {tuple(got)}")


class MissingTensor(GazeScreenError):
    pass


class EmptyTrainSet(ValidationError):
    pass


class DivergedLoss(GazeScreenError):
    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(f"non-finite training loss in epoch {epoch}")


class CorruptFile(GazeScreenError):
    pass


class VersionMismatch(GazeScreenError):
    pass


# eval
class EmptyTestSet(ValidationError):
    pass


class EmptyMatrix(ValidationError):
    pass


class RateMismatch(ValidationError):
    pass
