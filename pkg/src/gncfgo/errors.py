class GnssError(Exception):
    pass


class InsufficientObservationsError(GnssError, ValueError):
    pass


class GraphConstructionError(GnssError, ValueError):
    pass


class GeometryError(GnssError):
    """Rank-deficient or otherwise unusable satellite geometry."""


class DivergenceError(GnssError):
    """A solver produced a non-finite or singular system.

    ``theta`` is set when the failure happened inside a GNC round and
    ``epoch`` when a filter diverged at a given epoch index.
    """

    def __init__(self, msg, *, theta=None, epoch=None):
        super().__init__(msg)
        self.theta = theta
        self.epoch = epoch
