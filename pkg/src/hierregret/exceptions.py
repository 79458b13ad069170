class DomainError(ValueError):
    """An argument lies outside the domain where an operation is defined."""


class A2ViolationError(DomainError):
    """A feature vector has Euclidean norm greater than one."""


class ConfigError(ValueError):
    """An experiment configuration failed validation.

    ``errors`` holds ``(field, message)`` pairs.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        lines = [f"{field}: {msg}" for field, msg in self.errors]
        super().__init__("invalid configuration:\n  " + "\n  ".join(lines))
