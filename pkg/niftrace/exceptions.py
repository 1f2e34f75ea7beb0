"""
Exceptions raised by niftrace. Every class carries the one-word category that
the command line prints in front of the message.
"""


class NiftraceError(Exception):
    category = "error"


class DomainError(NiftraceError, ValueError):
    category = "domain"


class ConfigurationError(NiftraceError, ValueError):
    category = "config"


class FormatError(NiftraceError):
    category = "format"


class ParseError(NiftraceError):
    category = "parse"

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        if where:
            message = f"{where}: {message}"
        super().__init__(message)


class DivergenceError(NiftraceError):
    category = "diverged"

    def __init__(self, message, step=None):
        self.step = step
        super().__init__(message)
