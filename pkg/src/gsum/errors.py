"""Exception hierarchy. Every error carries a short machine-readable ``code``."""


class GsumError(Exception):
    code = "error"
    data_error = True  # CLI maps data errors to exit status 3


class TurnstileViolation(GsumError):
    code = "turnstile-violation"


class InvalidProfile(GsumError):
    code = "invalid-profile"
    data_error = False


class InvalidParams(GsumError):
    code = "invalid-params"
    data_error = False


class NotInClassG(GsumError):
    code = "not-in-class-g"
    data_error = False


class SeedMismatch(GsumError):
    code = "seed-mismatch"


class DimensionMismatch(GsumError):
    code = "dimension-mismatch"


class CandidateOverflow(GsumError):
    code = "candidate-overflow"


class EnvelopeMissing(GsumError):
    code = "envelope-missing"


class DomainError(GsumError):
    code = "domain-error"


class Infeasible(GsumError):
    code = "infeasible"
    data_error = False


class ConfigError(GsumError):
    code = "config-error"
    data_error = False


class StreamFormatError(GsumError):
    code = "stream-format"
