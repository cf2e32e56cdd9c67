"""Exception hierarchy shared by every subpackage."""

from __future__ import annotations


class ObfunasError(Exception):
    """Base class for domain errors (the CLI maps these to exit code 1)."""


class SchemaError(ObfunasError):
    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class ArchitectureInvalid(ObfunasError):
    def __init__(self, report):
        self.report = report
        lines = "; ".join(d.message for d in report.diagnostics)
        super().__init__(f"invalid architecture: {lines}")


class ShapeError(ObfunasError):
    def __init__(self, node: str, message: str):
        self.node = node
        super().__init__(f"node {node}: {message}")


class NodeExecutionError(ObfunasError):
    def __init__(self, node: str, cause: Exception):
        self.node = node
        self.cause = cause
        super().__init__(f"node {node}: {cause}")


class TransformError(ObfunasError):
    """A strategy precondition does not hold for the requested target."""


class PlanError(ObfunasError):
    """Raised by ``apply_plan``; ``step`` is the 1-based position of the failing application."""

    def __init__(self, step: int, cause: Exception):
        self.step = step
        self.cause = cause
        super().__init__(f"application {step} failed: {cause}")


class TableFormatError(ObfunasError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class UnknownArchitecture(ObfunasError):
    def __init__(self, digest: str):
        self.digest = digest
        super().__init__(f"unknown architecture {digest}")


class NoValidApplication(ObfunasError):
    """The current mask is saturated for every enabled strategy."""


class InfeasibleSearch(ObfunasError):
    def __init__(self, tau: float, min_flops: int | None):
        self.tau = tau
        self.min_flops = min_flops
        seen = "none evaluated" if min_flops is None else f"minimum observed FLOPs {min_flops}"
        super().__init__(f"no feasible mask with FLOPs < {tau:g} ({seen})")


class SearchBudgetExceeded(ObfunasError):
    def __init__(self, count: int, budget: int):
        self.count = count
        self.budget = budget
        super().__init__(f"plan space exceeds budget: reached {count} masks (cap {budget})")
