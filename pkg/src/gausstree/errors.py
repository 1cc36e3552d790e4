"""Exception hierarchy shared across the package.

The three classes map one-to-one onto the CLI exit codes: bad input (2),
infeasible numeric parameters (3) and internal-consistency violations (4).
"""


class InputError(ValueError):
    """Malformed or invalid input (documents, maps, flags)."""


class InfeasibleError(ValueError):
    """Parameters outside the feasible region (e.g. a distortion larger
    than the variance the test channel would have to describe)."""


class ConsistencyError(RuntimeError):
    """An identity that must hold by construction failed numerically;
    signals a bug or broken invariant rather than bad user input."""
