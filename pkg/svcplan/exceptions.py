from typing import Optional


class SvcPlanException(Exception):
    def __init__(self, message: str) -> None:
        super().__init__(message)
        self.message = message


class CaseParseError(SvcPlanException):
    def __init__(self, message: str, line: int) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


class CaseValidationError(SvcPlanException):
    pass


class CaseFetchError(SvcPlanException):
    pass


class ScenarioError(SvcPlanException):
    pass


class AssemblyError(SvcPlanException):
    pass


class PreconditionError(SvcPlanException):
    pass


class ContractViolation(SvcPlanException):
    pass


class NumericalFailure(SvcPlanException):
    def __init__(self, message: str, node: Optional[int] = None) -> None:
        if node is not None:
            message = f"node {node}: {message}"
        super().__init__(message)
        self.node = node


class MissingCellError(SvcPlanException):
    pass
