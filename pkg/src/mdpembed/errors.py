"""Exception hierarchy.

Two families matter to callers: :class:`ModelError` for malformed or
out-of-assumption inputs (CLI exit code 2) and :class:`NumericalError` for
solves that cannot certify an answer (CLI exit code 3).
"""


class ModelError(ValueError):
    """Invalid model, spec, or parameters."""


class SpecError(ModelError):
    """A model spec failed validation; ``field`` names the offending entry."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class MissingSummary(ModelError):
    """A positive-exit (state, action, exterior policy) triple has no summary."""


class NoExit(ModelError):
    """Excursion analysis requested for a pair that cannot leave the interior."""


class Unstable(ModelError):
    """Queue parameters without a stationary regime (arrival >= service)."""


class NumericalError(RuntimeError):
    """A computation could not produce a certified result."""


class MultiChain(NumericalError):
    """The policy-induced chain has more than one closed recurrent class."""

    def __init__(self, classes):
        self.classes = classes
        super().__init__(f"{len(classes)} disjoint recurrent classes: {classes}")


class NotAbsorbed(NumericalError):
    """The target set is not reached with probability one."""


class NotRecurrent(NumericalError):
    """Return to the reference state is not certain."""


class TruncationDiverged(NumericalError):
    """Truncated excursion quantities did not stabilise as the truncation grew."""


class NoConvergence(NumericalError):
    def __init__(self, iterations, residual):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"no convergence after {iterations} iterations (residual {residual:.3g})")


class Infeasible(NumericalError):
    """No occupation measure satisfies the constraint bounds.

    ``certificate`` is a dict: the least achievable worst-case violation
    (strictly positive), the occupation measure attaining it, and the minimum
    achievable value of each constrained cost taken on its own.
    """

    def __init__(self, certificate):
        self.certificate = certificate
        super().__init__(
            "constraints infeasible: smallest achievable violation "
            f"{certificate['min_violation']:.6g}"
        )


class ExcursionTooLong(NumericalError):
    """A simulated excursion exceeded the step cap."""


class CycleTooLong(NumericalError):
    """A simulated regeneration cycle exceeded the step cap."""


class ProvenanceMismatch(NumericalError):
    """An embedded policy cannot be lifted back to one source policy."""
