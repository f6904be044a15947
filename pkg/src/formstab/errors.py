"""Exception types shared across the package."""

from __future__ import annotations


class FormstabError(Exception):
    """Base class for all package-specific errors."""


class FormationValidationError(FormstabError):
    """A formation instance violates one or more structural invariants.

    Validation is exhaustive: ``violations`` lists every problem found,
    not just the first one.  Each violation is a `Violation` record with a
    ``kind`` tag (``cycle``, ``dimension_mismatch``, ``not_weakly_connected``,
    ``duplicate_edge``, ``self_loop``) and kind-specific detail fields.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations)
        super().__init__(f"invalid formation: {lines}")

    def kinds(self):
        return {v.kind for v in self.violations}


class ConvergenceFailure(FormstabError):
    """Eigenvalue iteration failed to converge."""


class NotStabilizableError(FormstabError):
    """The pair (A, B) fails the PBH rank test for some unstable eigenvalue."""

    def __init__(self, witness):
        self.witness = witness
        super().__init__(
            f"pair is not stabilizable: PBH rank deficiency at eigenvalue {witness}"
        )


class SynthesisFailure(FormstabError):
    """Gain synthesis produced a non-Hurwitz closed loop despite stabilizability."""


class RateTooAggressive(FormstabError):
    """Requested decay rate is not smaller than the spectral gap of the matrix."""


class CertificateError(FormstabError):
    """A numerically computed decay certificate failed its sampling check."""


class NotStableError(FormstabError):
    """Controller synthesis was requested for an instance judged unstable."""


class MissingStateError(FormstabError):
    """A control evaluation is missing the state of the agent or one of its parents."""


class NotSiblingParentsError(FormstabError):
    """The requested pair of nodes are not both parents of the given follower."""


class StepTooLargeError(FormstabError):
    """Integration step exceeds the stability cap for the closed-loop dynamics."""


class NonFiniteStateError(FormstabError):
    """Integration produced a non-finite state (overflow or NaN)."""

    def __init__(self, time):
        self.time = time
        super().__init__(f"non-finite state first detected at t={time}")
