"""Exception hierarchy shared across the package."""


class SpherePackError(Exception):
    """Base class for every error raised by spherepack."""


class InputError(SpherePackError):
    """Problem with user-supplied data (maps to CLI exit code 3)."""


class OptimizationError(SpherePackError):
    """Packing could not complete (maps to CLI exit code 4)."""


class ParseError(InputError):
    pass


class DegenerateMesh(InputError):
    pass


class NumericalAmbiguity(SpherePackError):
    """Every ray re-cast grazed an edge or vertex; callers treat the point as outside."""


class RejectionBudgetExceeded(InputError):
    pass


class UnknownPreset(InputError):
    pass


class SchemaError(InputError):
    pass


class LinkNotFound(InputError):
    def __init__(self, link: str):
        super().__init__(f"link not found in URDF: {link}")
        self.link = link


class XmlError(InputError):
    pass


class EmptyDomain(OptimizationError):
    pass


class InsufficientInterior(OptimizationError):
    pass


class AllPruned(OptimizationError):
    pass


class DegenerateEstimate(OptimizationError):
    pass
