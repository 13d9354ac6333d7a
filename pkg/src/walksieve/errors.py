"""Exception hierarchy shared by the simulation modules and the CLI."""


class WalkSieveError(Exception):
    """Base class for all package errors."""


class ConfigError(WalkSieveError, ValueError):
    """Invalid experiment configuration or law descriptor."""


class HypothesisError(WalkSieveError, ValueError):
    """A limit theorem was requested for a law outside its hypotheses."""


class ResourceFault(WalkSieveError, RuntimeError):
    """A simulation exceeded a configured size limit."""


class IndexOverflow(ResourceFault):
    """An integer index or population size left the representable range."""


class InsufficientPoints(ResourceFault):
    """A point pattern is too short for the requested thinning."""


class DegenerateBinning(WalkSieveError, ValueError):
    """A goodness-of-fit binning left fewer than two usable bins."""
