"""Exception hierarchy. Each fatal class carries the CLI exit code it maps to."""


class NcsAgreeError(Exception):
    exit_code = 1
    module = "ncsagree"

    def __init__(self, message, module=None):
        super().__init__(message)
        if module is not None:
            self.module = module

    def __str__(self):
        return f"[{self.module}] {super().__str__()}"


class ConfigError(NcsAgreeError):
    exit_code = 2
    module = "config"

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])


class IngestError(NcsAgreeError):
    exit_code = 3
    module = "corpus"


class ConsistencyError(NcsAgreeError):
    exit_code = 4
    module = "normalize"


class DegeneracyError(NcsAgreeError):
    exit_code = 5
    module = "agreement"


class OutputError(NcsAgreeError):
    exit_code = 6
    module = "report"
