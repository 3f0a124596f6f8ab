"""Exception types shared across the package."""


class LeggedMpcError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(LeggedMpcError):
    """An array argument does not have the dimension the model implies."""


class RankDeficientContacts(LeggedMpcError):
    """The contact-space inertia is numerically singular (condition > 1e12)."""


class NonPDHessian(LeggedMpcError):
    """A control Hessian failed its Cholesky factorization at maximum regularization."""


class MaxIterations(LeggedMpcError):
    """An iterative routine hit its iteration cap before reaching tolerance."""


class NoStepAccepted(LeggedMpcError):
    """Line search exhausted every step length at maximum regularization."""


class Stage1Infeasible(LeggedMpcError):
    """The whole-body controller's dynamics stage admits no feasible point."""


class ScheduleError(LeggedMpcError):
    """A contact schedule is inconsistent with the node grid or itself."""


class ConfigError(LeggedMpcError):
    """A scenario or model file fails schema validation."""
