"""Exception hierarchy.

Every error raised deliberately by the package derives from :class:`RespireError`
so callers (notably the CLI) can separate domain failures from bugs.
"""


class RespireError(Exception):
    """Base class for all package errors."""


class ParameterError(RespireError, ValueError):
    """A parameter lies outside its valid domain."""


class ConfigurationError(RespireError, ValueError):
    """A scene or pipeline configuration is inconsistent."""


class NoTargetError(RespireError):
    """No cell of the image stands out as a target (or the image holds no energy)."""


class UndefinedPhaseError(RespireError):
    """Phase requested at samples with zero magnitude."""

    def __init__(self, indices):
        self.indices = list(indices)
        shown = ", ".join(str(i) for i in self.indices[:10])
        more = "" if len(self.indices) <= 10 else f", ... ({len(self.indices)} total)"
        super().__init__(f"zero-magnitude samples at indices [{shown}{more}]")


class NoPeakError(RespireError):
    """The spectrum is flat over the search band."""


class DegenerateFundamentalError(RespireError):
    """The fundamental component has zero amplitude."""

    tag = "degenerate-fundamental"


class DegenerateLabelsError(RespireError, ValueError):
    """Only one class is present where two are required."""


class RankDeficiencyError(RespireError, ValueError):
    """Unregularized least squares on a singular design."""


class ContainerError(RespireError):
    """A binary container is malformed."""


class DegeneratePartitionError(DegenerateLabelsError):
    """A class partition used to train a second-step regressor is empty."""
