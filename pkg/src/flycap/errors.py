"""Exception hierarchy shared by the numeric modules and the command line.

Every error carries the process exit code the ``fcc`` command reports for it.
"""


class FlycapError(Exception):
    exit_code: int = 1


class InvalidParams(FlycapError):
    exit_code = 2


class DomainError(FlycapError):
    exit_code = 2


class OutputError(FlycapError):
    exit_code = 3


class SingularMatrix(FlycapError):
    exit_code = 4


class InternalInconsistency(FlycapError):
    exit_code = 4


class IntegrationError(FlycapError):
    exit_code = 4


class StepLimitExceeded(IntegrationError):
    pass


class StepUnderflow(IntegrationError):
    pass
