"""Exception hierarchy. Each class carries the exit code the CLI maps it to."""


class ForchlabError(Exception):
    exit_code = 1


class ConfigError(ForchlabError):
    exit_code = 2


class DomainError(ForchlabError, ValueError):
    exit_code = 2


class AdmissibilityError(DomainError):
    """Exponent inputs outside the admissible set; `violations` lists every failed condition."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__('inadmissible exponents: ' + '; '.join(self.violations))


class InvariantViolation(ForchlabError):
    exit_code = 3


class NumericalError(ForchlabError):
    exit_code = 3

    def __init__(self, message, **diagnostics):
        self.diagnostics = diagnostics
        if diagnostics:
            details = ', '.join(f'{k}={v}' for k, v in diagnostics.items())
            message = f'{message} ({details})'
        super().__init__(message)


class StepError(NumericalError):
    def __init__(self, message, step, residual=None, **diagnostics):
        self.step = step
        self.residual = residual
        super().__init__(message, step=step, residual=residual, **diagnostics)


class PreconditionError(ForchlabError):
    exit_code = 4


class RegistryError(PreconditionError):
    def __init__(self, message, column=None):
        self.column = column
        super().__init__(message)
