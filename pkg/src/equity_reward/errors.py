"""Exception hierarchy.

Each error class carries an ``exit_code`` so the command line can map
failures to a category-coded exit status.
"""


class EquityRewardError(Exception):
    exit_code = 1


class InputError(EquityRewardError, ValueError):
    """Bad argument value (non-finite temperature, empty trace, ...)."""

    exit_code = 4


class FormatError(InputError):
    """A file or document does not follow the expected layout."""


class InsufficientDataError(InputError):
    pass


class DegenerateRangeError(InputError):
    pass


class DegenerateBaselineError(InputError):
    """A baseline KPI component is zero, so ratios against it are undefined."""

    def __init__(self, component, message=None):
        self.component = component
        super().__init__(message or f"baseline component {component!r} is zero")


class ConfigurationError(EquityRewardError):
    exit_code = 3


class EpisodeCompleteError(EquityRewardError, RuntimeError):
    exit_code = 5


class PolicyError(EquityRewardError, RuntimeError):
    exit_code = 5

    def __init__(self, timestep, message):
        self.timestep = timestep
        super().__init__(f"t={timestep}: {message}")


class TrainingError(EquityRewardError, RuntimeError):
    exit_code = 5

    def __init__(self, timestep, message):
        self.timestep = timestep
        super().__init__(f"t={timestep}: {message}")


class WeightError(InputError):
    """Negative or non-finite reward weight."""


class ProtocolViolationError(EquityRewardError):
    """Weights break the round protocol (equity weight before round 3)."""

    exit_code = 7


class ParseError(EquityRewardError):
    exit_code = 7

    def __init__(self, message, raw_text):
        self.raw_text = raw_text
        super().__init__(message)


class TransportError(EquityRewardError):
    exit_code = 6


class RoundFailedError(EquityRewardError):
    exit_code = 8

    def __init__(self, round_no, message, partial=None):
        self.round = round_no
        self.partial = partial
        super().__init__(f"round {round_no}: {message}")


class IncompleteRecordError(EquityRewardError):
    exit_code = 4

    def __init__(self, missing_rounds):
        self.missing_rounds = list(missing_rounds)
        super().__init__(f"experiment record is missing rounds {self.missing_rounds}")
