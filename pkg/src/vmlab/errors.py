from __future__ import annotations


class VmlabError(Exception):
    """Base class for all errors raised by this package."""


class BlockNotFound(VmlabError, KeyError):
    def __init__(self, block_id: int):
        super().__init__(block_id)
        self.block_id = block_id

    def __str__(self) -> str:
        return f"block {self.block_id} not in cfg"


class ParseError(VmlabError, ValueError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class ValidationError(VmlabError, ValueError):
    pass


class ExecutionError(VmlabError, RuntimeError):
    """Raised when a program stops abnormally under the evaluator or the machine."""


class Timeout(ExecutionError):
    pass


class TrapDivZero(ExecutionError):
    pass


class TrapBounds(ExecutionError):
    pass


class MachineError(ExecutionError):
    """The emitted pseudo-assembly is inconsistent with its own CFG."""


class NoDispatcher(VmlabError):
    pass


class EmptyInput(VmlabError, ValueError):
    pass


class IncompleteRoleMap(VmlabError, ValueError):
    pass
