# app/core/exceptions.py
"""Error hierarchy shared by the solvers, the CLI and the API.

Each error carries the process exit code the CLI uses for it; the API maps
`is_input_error` to 422 and everything else to 500.
"""

EXIT_OK = 0
EXIT_CHECK_FAILURE = 1
EXIT_INPUT_ERROR = 2
EXIT_NUMERIC_FAILURE = 3


class InfomechError(Exception):
    exit_code: int = EXIT_INPUT_ERROR
    is_input_error: bool = True

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict:
        return {"error": type(self).__name__, "message": self.message, **self.details}


class InvalidInput(InfomechError):
    """Malformed context, tree, strategy or JSON payload."""


class ZeroMass(InfomechError):
    """A signal the buyer type assigns zero probability to."""


class DegeneratePrior(InfomechError):
    """The prior vanishes on a coordinate the operation needs."""


class RankDeficient(InfomechError):
    """The joint matrix has numeric rank below the number of types."""


class RequiresIndependence(InfomechError):
    """The operation is only sound when types and signals are independent."""


class SlackRequired(InfomechError):
    """Input menu has tight IR/IC constraints where slack is needed."""


class MissingDecision(InfomechError):
    """A strategy does not cover a decision node the type reaches."""


class InvalidPerturbation(InfomechError):
    """A perturbed joint matrix leaves the probability simplex."""


class ComplexityLimit(InfomechError):
    """Instance exceeds a configured enumeration cap."""


class Infeasible(InfomechError):
    """A linear program (or a frozen restriction of one) has no feasible point."""

    exit_code = EXIT_NUMERIC_FAILURE
    is_input_error = False


class NumericFailure(InfomechError):
    exit_code = EXIT_NUMERIC_FAILURE
    is_input_error = False
