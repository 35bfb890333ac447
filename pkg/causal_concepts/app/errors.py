class CausalConceptsError(Exception):
    """
    Base class for every error raised by the causal-concepts package.

    Each subclass carries an ``exit_code`` so the command-line entry point can
    translate a failure into the documented process status without inspecting
    messages: 1 for a failed run or computation, 2 for a configuration problem.
    """

    exit_code = 1


class ConfigurationError(CausalConceptsError):
    """Unknown dataset, factor, task or condition, or an invalid config value."""

    exit_code = 2


class BoundsError(ConfigurationError):
    """A factor index lies outside its value grid."""


class ContractError(CausalConceptsError):
    """A tensor or array does not have the shape an operation requires."""


class NumericalError(CausalConceptsError):
    """
    A loss term or statistic became NaN or infinite.

    Args:
        term (str): Name of the offending term, e.g. ``"kl_zc"``.
        detail (str): Optional extra context appended to the message.
    """

    def __init__(self, term, detail=""):
        self.term = term
        message = f"non-finite value in '{term}'"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)


class TaskTooSmall(CausalConceptsError):
    """A task has fewer training positives than the configured minimum."""

    def __init__(self, task_name, positives, minimum):
        self.task_name = task_name
        self.positives = positives
        self.minimum = minimum
        super().__init__(
            f"task '{task_name}' has {positives} train positives, minimum is {minimum}"
        )


class TrainingFailure(CausalConceptsError):
    """Training aborted after too many consecutive non-finite steps."""


class RunFailure(CausalConceptsError):
    """One or more runs of an experiment plan failed."""

    def __init__(self, failed_keys):
        self.failed_keys = list(failed_keys)
        super().__init__(f"{len(self.failed_keys)} run(s) failed: {', '.join(self.failed_keys)}")
