"""Exception types shared across the package.

The CLI maps these onto distinct exit codes; library code raises them
directly.  Plain ``ValueError`` is used for out-of-range arguments.
"""


class GraspfnError(Exception):
    """Base class for package-specific failures."""


class ConfigurationError(GraspfnError):
    """A configuration is invalid or a requested setup is geometrically impossible."""


class ContentError(GraspfnError):
    """Input data lacks required content (empty mask, all-zero depth image)."""


class TrainingError(GraspfnError):
    """Training diverged; carries the step at which it happened."""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step
