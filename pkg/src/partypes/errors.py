"""Exception hierarchy shared by every stage of the toolchain."""


class PartypesError(Exception):
    pass


class EvalError(PartypesError):
    """An index term or proposition could not be evaluated."""


class UnboundVariable(EvalError):
    def __init__(self, name):
        super().__init__(f"unbound variable '{name}'")
        self.name = name


class DivisionByZero(EvalError):
    pass


class IndexOutOfRange(EvalError):
    pass


class TypeMismatch(EvalError):
    pass


class IntegerOverflow(EvalError):
    pass


class CheckError(PartypesError):
    """Evaluation failed while deciding whether a value inhabits a datatype.

    Distinct from a negative answer: an unbound variable inside a refinement
    is a tooling bug, not a refinement violation.
    """


class ParseError(PartypesError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        first = self.diagnostics[0] if self.diagnostics else None
        super().__init__(str(first) if first else "parse error")


class ProtocolMismatch(PartypesError):
    def __init__(self, expected, offered, message=None):
        self.expected = expected
        self.offered = offered
        super().__init__(message or f"expected {expected}, offered {offered}")


class RefinementViolation(PartypesError):
    def __init__(self, value, datatype, message=None):
        self.value = value
        self.datatype = datatype
        super().__init__(message or f"value {value!r} does not inhabit {datatype}")


class PreconditionError(PartypesError):
    """Inputs handed to a checker do not satisfy its precondition."""
