"""Exception hierarchy.

Everything raised on purpose by contilog derives from :class:`ContilogError`,
so the CLI can map it to exit code 2 with a readable diagnostic.
"""

from typing import Any, Optional


class ContilogError(Exception):
    """Base class for all contilog errors."""


class InputError(ContilogError):
    """Malformed input file or argument."""

    def __init__(self, message: str, position: Optional[str] = None):
        self.message = message
        self.position = position
        super().__init__(message if position is None else f"{message} (at {position})")


class FormulaSyntaxError(ContilogError):
    """Formula text does not follow the grammar."""

    def __init__(self, message: str, position: int = 0, text: str = ""):
        self.message = message
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}")

    def caret(self) -> str:
        """Two-line excerpt pointing at the offending position."""
        return f"{self.text}\n{' ' * self.position}^"


class ArityError(FormulaSyntaxError):
    """Wrong number of arguments for a connective or symbol."""


class UnknownSymbolError(FormulaSyntaxError):
    def __init__(self, name: str, position: int = 0, text: str = ""):
        self.name = name
        super().__init__(f"unknown symbol {name!r}", position, text)


class SortMismatchError(FormulaSyntaxError):
    """A term or variable is used at the wrong sort."""


class ConstantRangeError(FormulaSyntaxError):
    """A constant lies outside [0, cap]."""


class StructureError(ContilogError):
    """A structure violates its declared axioms (metric, group, tree, tables)."""

    def __init__(self, message: str, witness: Any = None):
        self.witness = witness
        super().__init__(message)


class CapExceededError(ContilogError):
    def __init__(self, what: str, value: int, limit: int):
        self.what = what
        self.value = value
        self.limit = limit
        super().__init__(f"{what} = {value} exceeds cap {limit}")


class UnboundVariableError(ContilogError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"variable {name!r} is not bound by the assignment")


class EmptySortError(ContilogError):
    def __init__(self, sort: str):
        self.sort = sort
        super().__init__(f"quantifier over empty sort {sort!r}")


class SignatureMismatchError(ContilogError):
    """Structures that should share a signature do not."""


class SchemeError(ContilogError):
    """Unknown scheme, incomplete parameters or missing symbols."""


class ActionError(ContilogError):
    """An action is not a homomorphism into isometries, or violates its sort map."""

    def __init__(self, message: str, witness: Any = None):
        self.witness = witness
        super().__init__(message)
