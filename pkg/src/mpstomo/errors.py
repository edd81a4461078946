"""Exception hierarchy shared across the package."""


class TomographyError(Exception):
    """Base class for all package-specific errors."""


class ParameterError(TomographyError, ValueError):
    """An argument or configuration value is invalid."""


class FormatError(ParameterError):
    """An input file is malformed."""


class ResourceError(TomographyError):
    """A configured resource limit would be exceeded."""


class StateError(TomographyError, RuntimeError):
    """The operation requires a gauge or state the object is not in."""


class DegenerateStateError(TomographyError, ArithmeticError):
    """A numerically zero state was found where a normalizable one is required."""


class EstimateOutOfRegime(TomographyError):
    """Fidelity estimate requested outside the asymptotic regime where it is meaningful."""


class PartialReconstructionError(TomographyError):
    """Fixed-basis reconstruction found a disconnected coefficient graph.

    ``components`` lists the connected components (as lists of computational
    basis indices); amplitudes are determined only up to one unknown constant
    per component.
    """

    def __init__(self, components):
        self.components = [sorted(c) for c in components]
        super().__init__(
            f"coefficient graph has {len(self.components)} connected components; "
            "relative phases between components are undetermined"
        )
