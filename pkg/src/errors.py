"""Exception hierarchy for the training laboratory."""


class LabError(Exception):
    """Base error. `code` is the stable machine-readable tag printed by the CLI."""

    code = "lab_error"


class ShapeError(LabError):
    """Operand shapes do not compose."""

    code = "shape_mismatch"


class NonFiniteError(LabError):
    """A NaN or Inf appeared where finite values are required."""

    code = "non_finite"


class GraphError(LabError):
    """Misuse of the differentiation graph (wrong mode, non-scalar loss, ...)."""

    code = "graph"


class DomainError(LabError):
    """Argument outside the domain of an operation (log of non-positive value, ...)."""

    code = "domain"


class DatasetError(LabError):
    """Dataset file or dataset contents are invalid."""

    code = "dataset"


class TrainingError(LabError):
    """Training aborted."""

    code = "training"


class ReportError(LabError):
    """Report output could not be written."""

    code = "report"
