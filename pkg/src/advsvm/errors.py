"""Exception hierarchy shared by every module of the package."""


class AdvSVMError(Exception):
    """Base class for all package errors."""

    kind = "error"

    def to_record(self) -> dict:
        return {"error": self.kind, "message": str(self)}


class DomainError(AdvSVMError, ValueError):
    kind = "domain"


class NotPositiveDefiniteError(AdvSVMError, ValueError):
    kind = "not_positive_definite"


class DimensionError(AdvSVMError, ValueError):
    kind = "dimension"


class InsufficientDataError(AdvSVMError, ValueError):
    kind = "insufficient_data"


class DataFormatError(AdvSVMError, ValueError):
    """Raised while parsing a CSV or JSON input; carries row/column when known."""

    kind = "data_format"

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column

    def to_record(self) -> dict:
        rec = super().to_record()
        if self.row is not None:
            rec["row"] = self.row
        if self.column is not None:
            rec["column"] = self.column
        return rec


class DegeneratePolicyError(AdvSVMError, ValueError):
    kind = "degenerate_policy"


class ConicConstructionError(AdvSVMError, ValueError):
    kind = "conic_construction"


class SolverError(AdvSVMError, RuntimeError):
    """A conic solve finished without an optimal certificate."""

    kind = "solver"

    def __init__(self, message: str, status: str):
        super().__init__(f"{message} (status={status})")
        self.status = status

    def to_record(self) -> dict:
        rec = super().to_record()
        rec["status"] = self.status
        return rec


class FeasibilityError(AdvSVMError, ValueError):
    kind = "infeasible_policy"


class DynamicsError(AdvSVMError, RuntimeError):
    """A best response failed mid-run; ``trace`` holds the iterations completed so far."""

    kind = "dynamics"

    def __init__(self, message: str, trace):
        super().__init__(message)
        self.trace = trace

    def to_record(self) -> dict:
        rec = super().to_record()
        rec["completed_iterations"] = len(self.trace.iterations)
        return rec
