"""Exception types raised by the flow toolkit."""


class HFlowError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(HFlowError, ValueError):
    """Invalid scenario, lattice, grid or integrator settings."""


class ImmersionDegenerate(HFlowError):
    """The map stopped being an immersion somewhere on the grid."""

    def __init__(self, message, index=None, det_g=None):
        super().__init__(message)
        self.index = index
        self.det_g = det_g


class BlowupDetected(HFlowError):
    """Curvature crossed the blow-up threshold or became non-finite."""

    def __init__(self, message, max_norm_sq_a=None):
        super().__init__(message)
        self.max_norm_sq_a = max_norm_sq_a


class NotSpecial(HFlowError):
    """A check that needs f*(omega_2 + i omega_3) = rho was given a state outside that class."""

    def __init__(self, message, max_q=None):
        super().__init__(message)
        self.max_q = max_q
