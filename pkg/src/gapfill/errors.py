"""Exception types shared across the package.

Every operation-level failure mode has a named exception so that callers
(and the CLI exit-code contract) can distinguish scientific verdicts from
tooling errors.
"""


class GapfillError(Exception):
    """Base class for all package errors."""


class NonTorusGeometry(GapfillError):
    """Bulk assembly requires torus geometry."""


class EmptyRegion(GapfillError):
    """A region mask selects no lattice site."""


class MissingPhase(GapfillError):
    """A gauge transformation lacks a phase for some site."""


class DenseCapExceeded(GapfillError):
    """Dense eigensolve requested above the configured dimension cap."""


class WindowNotConverged(GapfillError):
    """Windowed eigensolve exhausted its budget before certification."""


class IncompleteSpectrum(GapfillError):
    """Gap detection on a report that does not certify completeness."""


class EnclosureViolation(GapfillError):
    """Spectral enclosure of a filter does not contain the Gershgorin bound."""


class MarginTooSmall(GapfillError):
    """Projection margin demands a polynomial degree above the cap."""


class GaugeNotCellPeriodic(GapfillError):
    """Gauge field cannot be reduced to a cell-periodic Bloch family."""


class NoUniformGap(GapfillError):
    """No fiber-uniform gap separates the requested band groups."""


class NonConstantRank(GapfillError):
    """In-interval fiber eigenvalue count varies over the dual-torus grid."""


class SingularOverlap(GapfillError):
    """An overlap determinant is numerically singular (grid too coarse)."""


class BandConnectionAmbiguous(GapfillError):
    """Eigenvector overlap too small to continue bands between momenta."""


class DecorationOutsideWindow(GapfillError):
    """A boundary decoration lies outside the lattice window."""


class MaskMismatch(GapfillError):
    """Bulk and restricted operators do not share a common window/mask."""


class ConfigInvalid(GapfillError):
    """Experiment configuration failed schema validation."""


class MissingArtifacts(GapfillError):
    """Report task invoked before the required task outputs exist."""
