"""Exception types raised across the simulator."""


class VbiError(Exception):
    """Base class for all simulator errors."""


class InvalidModel(VbiError):
    """A bridge or vehicle parameter set violates its invariants."""


class SupportOffMesh(VbiError):
    """A support position does not coincide with a mesh node."""


class SingularSystem(VbiError):
    """The constrained system is singular (insufficient supports)."""


class InvalidFrequency(VbiError):
    """A circular frequency passed to the damping fit is not positive."""


class FactorizationFailure(VbiError):
    """The effective stiffness matrix is not symmetric positive definite."""


class ShapeMismatch(VbiError):
    """An input vector does not match the expected DOF or axle count."""


class InvalidSpec(VbiError):
    """A roughness specification violates its invariants."""


class OffBridge(VbiError):
    """A position lies outside the bridge span."""


class DegenerateReference(VbiError):
    """The reference series has zero variance over the window."""


class UnknownBenchmark(VbiError):
    """No built-in benchmark configuration with the requested name."""


class ConfigError(VbiError):
    """A scenario configuration file is missing, malformed, or inconsistent."""
