"""Exception hierarchy shared by all modules."""


class AlphaNeckError(Exception):
    """Base class for every error raised by the package."""


# manifold
class PointOutsideTubularNeighborhood(AlphaNeckError):
    pass


class InvalidBasePoint(AlphaNeckError):
    pass


class IntegrationFailure(AlphaNeckError):
    pass


# domain
class BadResolution(AlphaNeckError):
    pass


class BadRadii(AlphaNeckError):
    pass


class AnnulusOutOfBounds(AlphaNeckError):
    pass


# energy
class NonFiniteValue(AlphaNeckError):
    pass


class RingNotOnGrid(AlphaNeckError):
    pass


class RadiusOutOfRange(AlphaNeckError):
    pass


# solver
class LineSearchStall(AlphaNeckError):
    pass


class InvalidOptions(AlphaNeckError):
    pass


# blowup
class PatchOutOfBounds(AlphaNeckError):
    pass


class BelowResolution(AlphaNeckError):
    pass


class DegreeAmbiguous(AlphaNeckError):
    def __init__(self, raw: float):
        super().__init__(f"discrete degree {raw:.6f} is not close to an integer")
        self.raw = raw


# neck
class BandOutOfRange(AlphaNeckError):
    pass


class DegenerateSpeed(AlphaNeckError):
    pass


class NoNeck(AlphaNeckError):
    pass


# oracles
class BandTooNarrow(AlphaNeckError):
    pass


class NoConvergence(AlphaNeckError):
    pass


# cli
class ConfigInvalid(AlphaNeckError):
    def __init__(self, field: str, reason: str):
        super().__init__(f"{field}: {reason}")
        self.field = field
        self.reason = reason
