"""
Error hierarchy shared by the engine, the HTTP app and the command line.

``status_code`` is what the HTTP layer answers with, ``exit_code`` what the
command line exits with (1 for bad input, 2 for a broken invariant).
"""
from fastapi import status


class GleasonEngineError(Exception):
    status_code = status.HTTP_400_BAD_REQUEST
    exit_code = 1

    def __init__(self, detail: str) -> None:
        super().__init__(detail)
        self.detail = detail


class InvariantViolation(GleasonEngineError):
    status_code = status.HTTP_500_INTERNAL_SERVER_ERROR
    exit_code = 2


# raster
class InvalidClassCode(GleasonEngineError):
    def __init__(self, row: int, column: int, index: int, code: int) -> None:
        super().__init__(
            f"Invalid tissue class code {code} at row {row}, column {column} (index {index})"
        )
        self.row = row
        self.column = column
        self.index = index
        self.code = code


class EmptyGrid(GleasonEngineError):
    pass


class ShapeMismatch(GleasonEngineError):
    pass


class MissingAssignment(GleasonEngineError):
    def __init__(self, component_id: int) -> None:
        super().__init__(f"No class assigned to component {component_id}")
        self.component_id = component_id


class MaskFormatError(GleasonEngineError):
    pass


# grading
class NoEpithelium(GleasonEngineError):
    status_code = status.HTTP_422_UNPROCESSABLE_ENTITY


class UnknownProfile(GleasonEngineError):
    status_code = status.HTTP_404_NOT_FOUND


# labelgen
class MixedScoreUnsupported(GleasonEngineError):
    pass


class MissingSegmenterOutput(GleasonEngineError):
    pass


class NotANegativeCase(GleasonEngineError):
    pass


class CaseSetMismatch(GleasonEngineError):
    pass


# consensus
class WrongReadCount(GleasonEngineError):
    status_code = status.HTTP_409_CONFLICT


class DuplicateReader(GleasonEngineError):
    status_code = status.HTTP_409_CONFLICT


class WrongReader(GleasonEngineError):
    status_code = status.HTTP_409_CONFLICT


class WrongState(GleasonEngineError):
    status_code = status.HTTP_409_CONFLICT


class FlagsNotAllowed(GleasonEngineError):
    pass


class DuplicateIhc(GleasonEngineError):
    status_code = status.HTTP_409_CONFLICT


# stats
class LengthMismatch(GleasonEngineError):
    pass


class UnknownLabel(GleasonEngineError):
    pass


class DegenerateMarginals(GleasonEngineError):
    status_code = status.HTTP_422_UNPROCESSABLE_ENTITY


class SingleClassTruth(GleasonEngineError):
    status_code = status.HTTP_422_UNPROCESSABLE_ENTITY


class Unreachable(GleasonEngineError):
    status_code = status.HTTP_422_UNPROCESSABLE_ENTITY


class AlignmentError(GleasonEngineError):
    def __init__(self, detail: str, case_ids: list[str] | None = None) -> None:
        super().__init__(detail)
        self.case_ids = case_ids or []


# synth
class PlacementOverflow(GleasonEngineError):
    pass


class ProfileUnrealizable(GleasonEngineError):
    pass


# cli
class SchemaError(GleasonEngineError):
    def __init__(self, detail: str, line: int | None = None) -> None:
        super().__init__(f"line {line}: {detail}" if line is not None else detail)
        self.line = line
