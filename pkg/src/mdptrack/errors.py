"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An operation was called with arguments that break its contract."""


class ParseError(ValueError):
    """A data file could not be parsed.

    Carries the offending path and 1-based line number when known.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = f"{path}:"
        if line is not None:
            prefix += f"{line}: "
        elif path is not None:
            prefix += " "
        super().__init__(prefix + message)
