"""Exception hierarchy.  Every error raised by the package derives from KeplerEulerError."""


class KeplerEulerError(Exception):
    pass


class OutOfDomain(KeplerEulerError):
    """A point lies outside the validity region of its chart."""

    def __init__(self, message: str = "point outside chart domain", trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class ChartMismatch(KeplerEulerError):
    pass


class DegreeOverflow(KeplerEulerError):
    pass


class DegreeUnderflow(KeplerEulerError):
    pass


class DegenerateVolume(KeplerEulerError):
    pass


class ZeroFactor(KeplerEulerError):
    pass


class DegenerateTwoForm(KeplerEulerError):
    pass


class CollisionSingularity(KeplerEulerError):
    pass


class EnergyDriftExceeded(KeplerEulerError):
    pass


class EnergyBelowPotential(KeplerEulerError):
    pass


class VanishingField(KeplerEulerError):
    pass


class NotBeltrami(KeplerEulerError):
    pass


class NotReebLike(KeplerEulerError):
    pass


class NotInvariant(KeplerEulerError):
    pass


class QuadratureTooCoarse(KeplerEulerError):
    pass


class TooSparse(KeplerEulerError):
    pass


class StepSizeUnderflow(KeplerEulerError):
    pass


class Collision(KeplerEulerError):
    """The direct Kepler flow reached the collision radius.

    ``time`` is the collision time and ``trajectory`` the partial trajectory
    integrated up to it.
    """

    def __init__(self, time: float, trajectory=None):
        super().__init__(f"collision at t={time:.17g}")
        self.time = time
        self.trajectory = trajectory
