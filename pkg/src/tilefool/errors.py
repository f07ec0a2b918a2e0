"""Exception hierarchy shared across the toolkit."""


class TilefoolError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(TilefoolError):
    """A domain-type invariant or operation precondition was violated."""


class TileSpecError(ValidationError):
    """Split ratio does not divide the image geometry."""


class DataError(TilefoolError):
    """Dataset source or sampling problem (unknown source, too few items, ...)."""


class ModelZooError(TilefoolError):
    """Unknown model id or model backend unavailable in this environment."""


class NonFiniteLossError(TilefoolError):
    """Crafting hit a NaN/Inf loss or gradient; the run is aborted, not patched over."""

    def __init__(self, message: str, epoch: int | None = None, iteration: int | None = None):
        super().__init__(message)
        self.epoch = epoch
        self.iteration = iteration


class ArtifactError(TilefoolError):
    """Base for perturbation-artifact file problems."""


class ArtifactFormatError(ArtifactError):
    """Bad magic, unsupported version, or truncated/garbled section."""


class ArtifactIntegrityError(ArtifactError):
    """Stored tensors violate the artifact's own invariants (re-tile or budget)."""


class ConfigError(TilefoolError):
    """Invalid CLI/run configuration. Carries every violation found, not just the first."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
