"""
Exception hierarchy for the three-vortex simulator

Every error carries the exit code the command-line entry point maps it to.
Regular flow events (collinear states, vertical slopes, collision floor,
step-size underflow) are reported through return values, not exceptions.
"""

from typing import Optional


class VortexError(Exception):
    """Base class for all simulator errors"""

    exit_code: int = 65

    def __init__(self, message: str, **context):
        super().__init__(message)
        self.message = message
        self.context = context

    def __str__(self) -> str:
        if not self.context:
            return self.message
        details = ", ".join(f"{key}={value}" for key, value in self.context.items())
        return f"{self.message} ({details})"


class InvalidStrengthsError(VortexError):
    """Strengths violate k1 >= k2 > 0 or the parabolic condition"""


class UnsupportedStrengthsError(VortexError):
    """Operation is only defined for parabolic strengths"""


class CollisionError(VortexError):
    """Two vortices coincide (within tolerance)"""


class DegenerateConfigurationError(VortexError):
    """Configuration has no valid trilinear image"""


class DivergentInvariantError(VortexError):
    """Invariant is undefined at a vertex of the trilinear triangle"""


class OffCurveDomainError(VortexError):
    """Point or parameter lies outside the critical curve's domain"""


class NoSolutionError(VortexError):
    """Nonlinear solve failed to produce a solution"""


class InconsistentConfigurationError(VortexError):
    """Side lengths cannot be realised with the requested constraints"""


class SingularVelocityError(VortexError):
    """Velocity field is singular at a coincident pair"""


class UndefinedDirectionError(VortexError):
    """Side-length rates need a nondegenerate orientation"""


class OutOfRangeError(VortexError):
    """Parameter outside the range the operation supports"""


class CoalescenceError(VortexError):
    """Self-similar solution evaluated past its coalescence time"""

    def __init__(self, message: str, t_star: Optional[float] = None, **context):
        super().__init__(message, t_star=t_star, **context)
        self.t_star = t_star
