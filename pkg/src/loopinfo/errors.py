"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class LoopInfoError(Exception):
    """Base class for all errors raised by loopinfo."""


class ModelError(LoopInfoError):
    """A system declaration is semantically invalid."""


class DelayViolation(ModelError):
    pass


class DanglingReference(ModelError):
    pass


class CausalityViolation(ModelError):
    pass


class WiringViolation(ModelError):
    """A block reads a signal that is not one of its declared inputs."""


class BadPmf(ModelError):
    pass


class AlphabetOverflow(ModelError):
    pass


class UnknownSignal(ModelError):
    pass


class ParseError(LoopInfoError, ValueError):
    """Syntax error with a source position.

    ``offset`` is a 0-based byte offset into the UTF-8 encoded source,
    ``line`` and ``column`` are 1-based.
    """

    def __init__(self, message: str, text: str, offset: int, expected=()):
        self.text = text
        self.char_offset = max(0, min(offset, len(text)))
        self.offset = len(text[: self.char_offset].encode("utf-8"))
        self.line = text.count("\n", 0, self.char_offset) + 1
        last_nl = text.rfind("\n", 0, self.char_offset)
        self.column = self.char_offset - last_nl
        self.expected = tuple(sorted(set(expected)))
        self.message = message
        detail = f"{message} at line {self.line}, column {self.column}"
        if self.expected:
            detail += f" (expected one of: {', '.join(self.expected)})"
        super().__init__(detail)


class FutureReference(ParseError, DanglingReference):
    """A signal reference with a positive lag such as ``w[t+1]``."""


class EvalError(LoopInfoError):
    pass


class MissingSample(EvalError):
    """The evaluation environment lacks a referenced sample (engine bug)."""


class BudgetExceeded(LoopInfoError):
    def __init__(self, required: int, budget: int, what: str = "atoms"):
        self.required = required
        self.budget = budget
        self.what = what
        super().__init__(f"{what} required: {required} exceeds budget {budget}")


class ZeroMassEvent(LoopInfoError):
    pass


class VariableMissing(LoopInfoError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return str(self.args[0]) if self.args else "variable missing"


class UnboundedWindow(LoopInfoError):
    pass


class NonIIDExogenous(LoopInfoError):
    pass


class HypothesesUnmet(LoopInfoError):
    pass
