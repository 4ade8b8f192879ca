"""Exception types shared across the analysis pipeline."""


class SentryError(Exception):
    """Base class for every error this package raises deliberately."""


class MinisolSyntaxError(SentryError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{line}:{column}: {message}")
        self.message = message
        self.line = line
        self.column = column


class UnsupportedFeature(SentryError):
    """Solidity construct outside the MiniSol subset; rejected loudly."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(f"{line}:{column}: unsupported: {message}")
        self.line = line
        self.column = column


class AnalysisError(SentryError):
    """Semantic error found after parsing (types, names, scoping)."""


class InheritanceCycle(AnalysisError):
    def __init__(self, cycle: list[str]):
        super().__init__("inheritance cycle: " + " -> ".join(cycle + cycle[:1]))
        self.cycle = cycle


class UnresolvedBase(AnalysisError):
    def __init__(self, contract: str, base: str):
        super().__init__(f"contract {contract}: unknown base {base}")
        self.contract = contract
        self.base = base


class LoweringError(SentryError):
    """Statement that survived parsing but cannot be lowered (should not happen)."""


class ExecLimitExceeded(SentryError):
    """Interpreter ran out of its step budget."""


class InfeasibleConstraints(SentryError):
    """No chromosome satisfying the constraint set could be generated."""


class LabelParseError(SentryError):
    def __init__(self, message: str, where: str = ""):
        super().__init__(f"{where}: {message}" if where else message)


class UnknownVulnType(LabelParseError):
    def __init__(self, name: str, where: str = ""):
        super().__init__(f"unknown vulnerability type {name!r}", where)
        self.name = name
